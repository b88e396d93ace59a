mod common;

use common::{rng, Recorder, Session};
use dpor_core::auditor::{audit, gen_challenge, verify_proof};
use dpor_core::block::{data_block, payload_capacity, WriteRecord};
use dpor_core::client::ClientState;
use dpor_core::homhash::hash_block;
use dpor_core::params::{Address, Side};
use dpor_core::protocol::{Challenge, ChallengeEntry, Request, Response, ServerLink};
use dpor_core::schedule::{self, RebuildKind};
use dpor_core::server::{AdversaryMode, Server};
use dpor_core::wire::{from_bytes, to_bytes};
use dpor_core::Error;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::Rng;

fn h(level: u32, side: Side, slot: u64) -> Address {
    Address::H { level, side, slot }
}

#[test]
fn read_after_init_returns_uploaded_blocks() {
    let mut s = Session::new(8, 6, 5, 1);
    for i in 0..5 {
        assert_eq!(s.client.read(&mut s.server, i).unwrap(), s.reference[i as usize]);
    }
    assert_eq!(s.client.read_file(&mut s.server).unwrap(), s.file());
    assert!(matches!(s.client.read(&mut s.server, 5), Err(Error::OutOfRange { .. })));
    // server-side out-of-range answers with an error message
    assert!(matches!(s.server.handle(&Request::Read { index: 9 }), Response::Error(_)));
}

#[test]
fn first_write_lands_in_level_zero_untwisted() {
    let mut s = Session::new(8, 6, 3, 2);
    let rec = WriteRecord::modify(1, b"hello".to_vec());
    s.write(&rec).unwrap();
    let block = rec.to_block(&s.client.params).unwrap();
    assert_eq!(s.server.stored_block(&h(0, Side::X, 0)), Some(&block));
    assert_eq!(s.server.stored_block(&h(0, Side::Y, 0)), Some(&block));
    let tx = s.server.stored_tag(&h(0, Side::X, 0)).unwrap();
    let ty = s.server.stored_tag(&h(0, Side::Y, 0)).unwrap();
    assert_eq!(tx.hash, ty.hash);
    s.server.check_coherence().unwrap();
    assert_eq!(s.client.read(&mut s.server, 1).unwrap(), b"hello");
}

#[test]
fn fourth_write_merges_into_level_two_coherently() {
    let mut s = Session::new(8, 6, 3, 3);
    let mut r = rng(3);
    for _ in 0..4 {
        let rec = s.random_record(&mut r);
        s.write(&rec).unwrap();
        s.server.check_coherence().unwrap();
    }
    assert_eq!(s.server.counter(), 4);
    for l in 0..3 {
        let occupied = s.server.stored_block(&h(l, Side::X, 0)).is_some();
        assert_eq!(occupied, l == 2);
    }
    for a in schedule::level_addresses(2) {
        let b = s.server.stored_block(&a).unwrap();
        assert_eq!(hash_block(&s.client.params, b), s.server.stored_tag(&a).unwrap().hash);
    }
}

#[test]
fn nth_write_rebuilds_c_and_empties_h() {
    let mut s = Session::new(4, 6, 2, 4);
    let mut r = rng(4);
    let before: Vec<_> = schedule::c_addresses(4).iter().map(|a| s.server.stored_tag(a).cloned()).collect();
    for _ in 0..4 {
        let rec = s.random_record(&mut r);
        s.write(&rec).unwrap();
    }
    assert!((0..2).all(|l| s.server.stored_block(&h(l, Side::X, 0)).is_none()));
    let after: Vec<_> = schedule::c_addresses(4).iter().map(|a| s.server.stored_tag(a).cloned()).collect();
    assert_eq!(after.len(), 8);
    assert!(before.iter().zip(&after).all(|(a, b)| a != b));
    s.server.check_coherence().unwrap();
    assert_eq!(s.client.read_file(&mut s.server).unwrap(), s.file());
}

#[test]
fn deleting_the_last_block_truncates() {
    let mut s = Session::new(8, 6, 4, 5);
    s.write(&WriteRecord::delete(3)).unwrap();
    assert_eq!(s.client.len(), 3);
    assert_eq!(s.client.read_file(&mut s.server).unwrap(), s.file());
    // now a middle delete exercises the swap
    s.write(&WriteRecord::delete(0)).unwrap();
    assert_eq!(s.client.read_file(&mut s.server).unwrap(), s.file());
    s.server.check_coherence().unwrap();
}

#[test]
fn only_block_cannot_be_deleted_and_capacity_is_enforced() {
    let mut s = Session::new(2, 6, 1, 6);
    assert!(s.client.write(&mut s.server, &WriteRecord::delete(0)).is_err());
    s.write(&WriteRecord::insert(0, b"a".to_vec())).unwrap();
    assert!(s.client.write(&mut s.server, &WriteRecord::insert(0, b"b".to_vec())).is_err());
}

#[test]
fn empty_file_round_trips_and_audits() {
    let mut s = Session::new(4, 6, 0, 7);
    assert_eq!(s.client.read_file(&mut s.server).unwrap(), b"");
    let st = s.client.statement().unwrap();
    let out = audit(&s.client.params, &st, 4, &mut s.server, &mut rng(7)).unwrap();
    assert!(out.passed);
}

#[test]
fn oversize_file_is_rejected() {
    let (params, secret) = common::toy(4, 6);
    let file = vec![1u8; payload_capacity(&params) * 4 + 1];
    assert!(matches!(ClientState::init(params, secret, &file), Err(Error::Oversize { .. })));
}

#[test]
fn two_inits_are_independent() {
    let a = Session::new(4, 6, 2, 8);
    let mut r = rng(99);
    let (params, secret) =
        dpor_core::params::setup(&mut r, dpor_core::params::Profile::TOY, 4, 6, dpor_core::sigtag::SigScheme::Ed25519, Default::default())
            .unwrap();
    let (b, _) = ClientState::init(params, secret, b"x").unwrap();
    assert_ne!(a.client.params.fid, b.params.fid);
    // a's statement does not verify under b's key
    assert!(!a.client.statement().unwrap().verify(&b.params));
}

#[test]
fn honest_interleaved_run_n16() {
    let mut s = Session::new(16, 6, 8, 9);
    let mut r = rng(9);
    let mut audits = 0;
    for step in 0..200 {
        match step % 3 {
            0 => {
                let i = r.gen_range(0..s.client.len());
                assert_eq!(s.client.read(&mut s.server, i).unwrap(), s.reference[i as usize]);
            }
            1 => {
                let rec = s.random_record(&mut r);
                s.write(&rec).unwrap();
            }
            _ => {
                let st = s.client.statement().unwrap();
                let out = audit(&s.client.params, &st, 3, &mut s.server, &mut r).unwrap();
                assert!(out.passed, "{:?}", out.reason);
                audits += 1;
            }
        }
        s.server.check_coherence().unwrap();
    }
    assert!(audits > 60);
    assert_eq!(s.client.read_file(&mut s.server).unwrap(), s.file());
}

#[test]
fn stale_read_is_detected() {
    let mut s = Session::new(8, 6, 3, 10);
    let slot = s.client.positions[1].0;
    s.server.set_mode(AdversaryMode::Stale { addr: Address::U { slot } });
    s.write(&WriteRecord::modify(1, b"new".to_vec())).unwrap();
    let err = s.client.read(&mut s.server, 1).unwrap_err();
    assert!(matches!(err, Error::Verification(_)), "{err:?}");
}

#[test]
fn bitflipped_read_aborts() {
    let mut s = Session::new(8, 6, 3, 11);
    let slot = s.client.positions[2].0;
    s.server.set_mode(AdversaryMode::BitFlip { addr: Address::U { slot }, segment: 0 });
    assert!(matches!(s.client.read(&mut s.server, 2), Err(Error::Verification(_))));
    assert_eq!(s.client.read(&mut s.server, 0).unwrap(), s.reference[0]);
}

#[test]
fn skipped_write_is_caught_by_root_check() {
    let mut s = Session::new(8, 6, 3, 12);
    s.server.set_mode(AdversaryMode::SkipWrite);
    let before = s.client.clone();
    let err = s.client.write(&mut s.server, &WriteRecord::modify(0, b"z".to_vec())).unwrap_err();
    assert!(matches!(err, Error::Verification(_)));
    assert_eq!(s.client, before);
}

#[test]
fn stale_level_tags_fail_audit() {
    let mut s = Session::new(8, 6, 3, 13);
    let mut r = rng(13);
    let target = h(0, Side::X, 0);
    s.server.set_mode(AdversaryMode::Stale { addr: target });
    // level 0 is emptied by a merge and later refilled
    for _ in 0..3 {
        let rec = s.random_record(&mut r);
        s.write(&rec).unwrap();
    }
    let st = s.client.statement().unwrap();
    let challenge = Challenge { counter: st.counter, entries: vec![ChallengeEntry { nu: BigUint::from(1u32), addr: target }] };
    let proof = match s.server.handle(&Request::Audit(challenge.clone())) {
        Response::AuditProof(p) => p,
        other => panic!("{other:?}"),
    };
    assert!(!verify_proof(&s.client.params, &challenge, &proof).passed);
}

#[test]
fn tag_store_rejects_wrong_shape() {
    let mut s = Session::new(8, 6, 3, 14);
    let params = s.client.params.clone();
    let slot_tag = s.server.stored_tag(&Address::U { slot: 0 }).unwrap().clone();
    let ack = s.server.handle(&Request::WriteApply { record: WriteRecord::modify(0, vec![]), u_tag: Some(slot_tag.clone()) });
    let Response::WriteAck { transcript, .. } = ack else { panic!("{ack:?}") };
    assert_eq!(transcript, schedule::plan_rebuild(8, 0, 3));
    let bad = s.server.handle(&Request::StoreTags { addrs: transcript.outputs.clone(), tags: vec![slot_tag.clone()] });
    assert!(matches!(bad, Response::Error(_)));
    let bad = s.server.handle(&Request::StoreTags { addrs: vec![h(1, Side::X, 0)], tags: vec![slot_tag.clone()] });
    assert!(matches!(bad, Response::Error(_)));
    // a second write cannot start while tags are pending
    let busy = s.server.handle(&Request::WriteApply { record: WriteRecord::modify(0, vec![]), u_tag: Some(slot_tag.clone()) });
    assert!(matches!(busy, Response::Error(_)));
    assert!(s.server.check_coherence().is_err());
    let ok = s.server.handle(&Request::StoreTags { addrs: transcript.outputs, tags: vec![slot_tag.clone(), slot_tag] });
    assert_eq!(ok, Response::Ack);
    let _ = params;
}

#[test]
fn empty_fetch_returns_empty_list() {
    let mut s = Session::new(4, 6, 1, 15);
    assert_eq!(s.server.call(&Request::FetchTags { addrs: vec![] }).unwrap(), Response::Tags(vec![]));
    assert!(matches!(s.server.handle(&Request::FetchTags { addrs: vec![h(1, Side::X, 0)] }), Response::Error(_)));
}

#[test]
fn single_unit_challenge_returns_the_block() {
    let mut s = Session::new(4, 6, 2, 16);
    let addr = Address::C { side: Side::Y, slot: 2 };
    let challenge = Challenge { counter: 0, entries: vec![ChallengeEntry { nu: BigUint::from(1u32), addr }] };
    let Response::AuditProof(proof) = s.server.call(&Request::Audit(challenge)).unwrap() else { panic!() };
    assert_eq!(&proof.bstar, s.server.stored_block(&addr).unwrap());
}

#[test]
fn deleted_slot_fails_audit() {
    let mut s = Session::new(4, 6, 2, 17);
    s.server.set_mode(AdversaryMode::parse("delete:c:1").unwrap());
    assert_eq!(s.server.deleted().len(), 8);
    let st = s.client.statement().unwrap();
    let out = audit(&s.client.params, &st, 1, &mut s.server, &mut rng(17)).unwrap();
    assert!(!out.passed);
}

#[test]
fn delete_fraction_is_ceiling_of_level_size() {
    let mut s = Session::new(16, 6, 2, 18);
    let mut r = rng(18);
    for _ in 0..7 {
        let rec = s.random_record(&mut r);
        s.write(&rec).unwrap();
    }
    // w = 7: levels 0, 1, 2
    s.server.set_mode(AdversaryMode::parse("delete:2:0.5").unwrap());
    assert_eq!(s.server.deleted().len(), 4);
    s.server.set_mode(AdversaryMode::parse("delete:all:0.49").unwrap());
    // ⌈0.49·2⌉ + ⌈0.49·4⌉ + ⌈0.49·8⌉ + ⌈0.49·32⌉
    assert_eq!(s.server.deleted().len(), 1 + 2 + 4 + 16);
    s.server.set_mode(AdversaryMode::parse("delete:3:0.5").unwrap());
    assert!(s.server.deleted().is_empty());
}

#[test]
fn rebuild_traffic_carries_only_tags() {
    let mut s = Session::new(4, 6, 3, 19);
    let mut r = rng(19);
    for _ in 0..8 {
        let rec = s.random_record(&mut r);
        let mut link = Recorder { inner: &mut s.server, log: vec![] };
        s.client.write(&mut link, &rec).unwrap();
        dpor_core::extractor::apply_record(&mut s.reference, &rec).unwrap();
        for (req, resp) in &link.log {
            assert!(!matches!(req, Request::Read { .. } | Request::Audit(_)));
            assert!(!matches!(resp, Response::ReadProof(_) | Response::AuditProof(_)));
        }
        let kinds: Vec<u8> = link.log.iter().map(|(q, _)| q.frame_type()).collect();
        assert_eq!(kinds.first(), Some(&0x03));
        assert_eq!(kinds.last(), Some(&0x06));
    }
}

#[test]
fn client_state_is_small() {
    let s = Session::new(64, 6, 64, 20);
    let bytes = to_bytes(&s.client, s.client.params.segment_width());
    let params_bytes = to_bytes(&s.client.params, 0).len();
    // keys, Γ, root, counter and 16 bytes per position: nothing proportional to β·n
    let budget = params_bytes + 200 + s.client.params.m() * 8 + 16 * 64;
    assert!(bytes.len() <= budget, "{} > {budget}", bytes.len());
    let back: ClientState = from_bytes(&bytes).unwrap();
    assert_eq!(back, s.client);
}

#[test]
fn server_snapshot_round_trips_mid_cycle() {
    let mut s = Session::new(8, 6, 4, 21);
    let mut r = rng(21);
    for _ in 0..5 {
        let rec = s.random_record(&mut r);
        s.write(&rec).unwrap();
    }
    s.server.set_mode(AdversaryMode::parse("delete:0:0.5:3").unwrap());
    let width = s.client.params.segment_width();
    let bytes = to_bytes(&s.server, width);
    let back: Server = from_bytes(&bytes).unwrap();
    assert_eq!(back, s.server);
    assert!(from_bytes::<Server>(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn audit_challenge_shape() {
    let mut s = Session::new(8, 6, 2, 22);
    let mut r = rng(22);
    for _ in 0..5 {
        let rec = s.random_record(&mut r);
        s.write(&rec).unwrap();
    }
    let st = s.client.statement().unwrap();
    let q = gen_challenge(&s.client.params, &st, 8, &mut r).unwrap();
    assert_eq!(q.entries.len(), 24);
    assert!(q.entries.iter().all(|e| e.nu >= BigUint::from(1u32) && e.nu < s.client.params.q));
    let mut forged = st.clone();
    forged.counter += 1;
    assert!(gen_challenge(&s.client.params, &forged, 8, &mut r).is_err());
}

#[test]
fn statements_increase_and_verify() {
    let mut s = Session::new(8, 6, 2, 23);
    let mut r = rng(23);
    let mut last = s.client.statement().unwrap();
    assert!(last.verify(&s.client.params));
    for _ in 0..4 {
        let rec = s.random_record(&mut r);
        let st = s.client.write(&mut s.server, &rec).unwrap();
        dpor_core::extractor::apply_record(&mut s.reference, &rec).unwrap();
        assert!(st.verify(&s.client.params));
        assert!(st.counter > last.counter);
        last = st;
    }
}

#[test]
fn transcripts_follow_the_schedule() {
    let mut s = Session::new(4, 6, 2, 24);
    let mut r = rng(24);
    for w in 0..8u64 {
        let rec = s.random_record(&mut r);
        let mut link = Recorder { inner: &mut s.server, log: vec![] };
        s.client.write(&mut link, &rec).unwrap();
        let t = link
            .log
            .iter()
            .find_map(|(_, resp)| match resp {
                Response::WriteAck { transcript, .. } => Some(transcript.clone()),
                _ => None,
            })
            .unwrap();
        dpor_core::extractor::apply_record(&mut s.reference, &rec).unwrap();
        let expect = if w % 4 == 3 { RebuildKind::C } else { RebuildKind::Level(schedule::target_level(w % 4)) };
        assert_eq!(t.kind, expect);
    }
    let _ = data_block;
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_sessions_stay_coherent(seed in any::<u64>(), writes in 1usize..24) {
        let mut s = Session::new(8, 5, 3, seed);
        let mut r = rng(seed);
        for _ in 0..writes {
            let rec = s.random_record(&mut r);
            s.write(&rec).unwrap();
            prop_assert!(s.server.check_coherence().is_ok());
        }
        prop_assert_eq!(s.client.read_file(&mut s.server).unwrap(), s.file());
        let st = s.client.statement().unwrap();
        prop_assert!(audit(&s.client.params, &st, 2, &mut s.server, &mut r).unwrap().passed);
    }
}
