use std::net::TcpListener;
use std::sync::{Arc, RwLock};
use std::thread;

use dpor::transport::{serve, ByteMeter, Counting, FrameTransport, Link, Loopback, TcpTransport};
use dpor_core::auditor::audit;
use dpor_core::block::WriteRecord;
use dpor_core::client::ClientState;
use dpor_core::params::{setup, Profile, SetupLimits};
use dpor_core::protocol::{Category, Request, Response, ServerLink};
use dpor_core::server::Server;
use dpor_core::sigtag::SigScheme;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn fresh(n: u64) -> (ClientState, dpor_core::protocol::InitUpload) {
    let mut rng = ChaCha20Rng::seed_from_u64(n);
    let (params, secret) = setup(&mut rng, Profile::TOY, n, 6, SigScheme::Ed25519, SetupLimits::default()).unwrap();
    ClientState::init(params, secret, b"transport check").unwrap()
}

/// Fixed script over any transport: init, reads, writes through a full cycle, audits.
fn script<T: FrameTransport>(transport: T, n: u64) -> (Vec<String>, ByteMeter, T) {
    let (mut client, upload) = fresh(n);
    let mut link = Link::new(transport, client.params.segment_width());
    let mut log = Vec::new();
    let r = link.call(&Request::Init(upload)).unwrap();
    log.push(format!("{r:?}"));
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for k in 0..n + 2 {
        let rec = match k % 3 {
            0 => WriteRecord::insert(0, vec![k as u8; 5]),
            1 => WriteRecord::modify(1, vec![k as u8; 9]),
            _ => WriteRecord::delete(0),
        };
        let st = client.write(&mut link, &rec).unwrap();
        log.push(format!("{:?}", client.read_file(&mut link).unwrap()));
        log.push(format!("{:?}", audit(&client.params, &st, 2, &mut link, &mut rng).unwrap()));
    }
    (log, link.meter, link.transport)
}

#[test]
fn loopback_and_tcp_are_byte_identical() {
    let n = 8;
    let (log_a, meter_a, counting_a) = script(Counting::new(Loopback::default(), true), n);

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let store = Arc::new(RwLock::new(None));
    let server = thread::spawn(move || serve(listener, store, Some(1), Arc::new(|_: &Server| {})));
    let tcp = TcpTransport::connect(addr).unwrap();
    let (log_b, meter_b, counting_b) = script(Counting::new(tcp, true), n);
    drop(counting_b.inner);
    server.join().unwrap().unwrap();

    assert_eq!(log_a, log_b);
    assert_eq!(counting_a.frames, counting_b.frames);
    assert_eq!(meter_a, meter_b);
}

#[test]
fn meter_matches_counting_wrapper() {
    let (_, meter, counting) = script(Counting::new(Loopback::default(), true), 4);
    assert_eq!(meter.grand_total(), counting.bytes);
    let summed: u64 = counting.frames.iter().map(|f| f.len() as u64).sum();
    assert_eq!(summed, counting.bytes);
    assert!(Category::ALL.iter().all(|c| meter.total(*c) > 0));
}

#[test]
fn malformed_frames_get_error_responses() {
    let mut lb = Loopback::default();
    for frame in [&[][..], &[0x02, 0, 0, 0][..], &[0x02, 0, 0, 0, 9, 1][..], &[0x7f, 0, 0, 0, 0][..]] {
        let reply = lb.exchange(frame).unwrap();
        assert!(matches!(Response::from_frame(&reply).unwrap(), Response::Error(_)));
    }
    // requests before init are refused, not crashed on
    let reply = lb.exchange(&Request::Read { index: 0 }.to_frame(0)).unwrap();
    assert!(matches!(Response::from_frame(&reply).unwrap(), Response::Error(_)));
}

#[test]
fn concurrent_audits_over_tcp() {
    let (client, upload) = fresh(8);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let store = Arc::new(RwLock::new(Some(Server::init(upload).unwrap())));
    let srv = thread::spawn(move || serve(listener, store, Some(4), Arc::new(|_: &Server| {})));
    let st = client.statement().unwrap();
    let workers: Vec<_> = (0..4)
        .map(|k| {
            let params = client.params.clone();
            let st = st.clone();
            thread::spawn(move || {
                let mut link = Link::new(TcpTransport::connect(addr).unwrap(), params.segment_width());
                let mut rng = ChaCha20Rng::seed_from_u64(k);
                (0..10).all(|_| audit(&params, &st, 3, &mut link, &mut rng).unwrap().passed)
            })
        })
        .collect();
    assert!(workers.into_iter().all(|w| w.join().unwrap()));
    srv.join().unwrap().unwrap();
}
