//! Frame transports with byte metering, plus the TCP server loop.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, RwLock};
use std::thread;

use dpor_core::protocol::{split_frame, Category, Request, Response, ServerLink, FRAME_HEADER};
use dpor_core::server::Server;
use dpor_core::{Error, Result};

/// Moves one request frame to the server and returns the response frame.
pub trait FrameTransport {
    fn exchange(&mut self, frame: &[u8]) -> Result<Vec<u8>>;
}

impl<T: FrameTransport + ?Sized> FrameTransport for &mut T {
    fn exchange(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        (**self).exchange(frame)
    }
}

/// Server-side dispatch of one decoded request. `Init` creates the store.
pub fn serve_request(store: &mut Option<Server>, req: &Request) -> Response {
    match (req, store.as_mut()) {
        (Request::Init(upload), None) => match Server::init(upload.clone()) {
            Ok(server) => {
                let root = server.root();
                *store = Some(server);
                Response::Digest(root)
            }
            Err(e) => Response::Error(e.to_string()),
        },
        (_, Some(server)) => server.handle(req),
        (_, None) => Response::Error("no file stored yet".into()),
    }
}

fn response_width(store: &Option<Server>) -> usize {
    store.as_ref().map_or(0, |s| s.params().segment_width())
}

/// Answers a request frame; malformed frames get an error response.
pub fn serve_frame(store: &mut Option<Server>, frame: &[u8]) -> Vec<u8> {
    let resp = match Request::from_frame(frame) {
        Ok(req) => serve_request(store, &req),
        Err(e) => Response::Error(format!("bad request frame: {e}")),
    };
    resp.to_frame(response_width(store))
}

/// In-process server that still goes through full frame encoding.
#[derive(Debug, Default)]
pub struct Loopback {
    pub store: Option<Server>,
}

impl Loopback {
    pub fn new(server: Server) -> Self {
        Loopback { store: Some(server) }
    }

    pub fn server(&self) -> Option<&Server> {
        self.store.as_ref()
    }

    pub fn server_mut(&mut self) -> Option<&mut Server> {
        self.store.as_mut()
    }
}

impl FrameTransport for Loopback {
    fn exchange(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        Ok(serve_frame(&mut self.store, frame))
    }
}

fn io_err(e: io::Error) -> Error {
    Error::Protocol(format!("transport: {e}"))
}

/// Reads exactly one frame from a stream; `None` on a clean close.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; FRAME_HEADER];
    match r.read_exact(&mut header[..1]) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    r.read_exact(&mut header[1..])?;
    let len = u32::from_be_bytes(header[1..].try_into().expect("4 bytes")) as usize;
    let mut frame = Vec::with_capacity(FRAME_HEADER + len);
    frame.extend_from_slice(&header);
    frame.resize(FRAME_HEADER + len, 0);
    r.read_exact(&mut frame[FRAME_HEADER..])?;
    Ok(Some(frame))
}

pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(io_err)?;
        stream.set_nodelay(true).map_err(io_err)?;
        Ok(TcpTransport { stream })
    }
}

impl FrameTransport for TcpTransport {
    fn exchange(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        self.stream.write_all(frame).map_err(io_err)?;
        read_frame(&mut self.stream).map_err(io_err)?.ok_or_else(|| Error::Protocol("server closed the connection".into()))
    }
}

/// Bytes sent and received per category.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ByteMeter {
    counts: BTreeMap<Category, (u64, u64)>,
}

impl ByteMeter {
    pub fn record(&mut self, cat: Category, sent: usize, received: usize) {
        let e = self.counts.entry(cat).or_default();
        e.0 += sent as u64;
        e.1 += received as u64;
    }

    pub fn sent(&self, cat: Category) -> u64 {
        self.counts.get(&cat).map_or(0, |e| e.0)
    }

    pub fn received(&self, cat: Category) -> u64 {
        self.counts.get(&cat).map_or(0, |e| e.1)
    }

    /// Both directions.
    pub fn total(&self, cat: Category) -> u64 {
        self.sent(cat) + self.received(cat)
    }

    pub fn grand_total(&self) -> u64 {
        Category::ALL.iter().map(|c| self.total(*c)).sum()
    }

    pub fn reset(&mut self) {
        self.counts.clear();
    }
}

/// A [`ServerLink`] over any frame transport, metering every exchange.
pub struct Link<T> {
    pub transport: T,
    pub meter: ByteMeter,
    seg_width: usize,
}

impl<T: FrameTransport> Link<T> {
    /// `seg_width` is the segment field width used when encoding blocks.
    pub fn new(transport: T, seg_width: usize) -> Self {
        Link { transport, meter: ByteMeter::default(), seg_width }
    }
}

impl<T: FrameTransport> ServerLink for Link<T> {
    fn call(&mut self, req: &Request) -> Result<Response> {
        let frame = req.to_frame(self.seg_width);
        let reply = self.transport.exchange(&frame)?;
        self.meter.record(req.category(), frame.len(), reply.len());
        split_frame(&reply)?;
        Response::from_frame(&reply)
    }
}

/// Counts raw frame bytes and keeps a copy of every frame, independently of
/// the meter.
pub struct Counting<T> {
    pub inner: T,
    pub bytes: u64,
    pub frames: Vec<Vec<u8>>,
    pub keep_frames: bool,
}

impl<T> Counting<T> {
    pub fn new(inner: T, keep_frames: bool) -> Self {
        Counting { inner, bytes: 0, frames: Vec::new(), keep_frames }
    }
}

impl<T: FrameTransport> FrameTransport for Counting<T> {
    fn exchange(&mut self, frame: &[u8]) -> Result<Vec<u8>> {
        let reply = self.inner.exchange(frame)?;
        self.bytes += (frame.len() + reply.len()) as u64;
        if self.keep_frames {
            self.frames.push(frame.to_vec());
            self.frames.push(reply.clone());
        }
        Ok(reply)
    }
}

/// Shared store for the TCP server. Read-only requests share a read lock;
/// mutating ones are serialized behind the write lock.
pub type SharedStore = Arc<RwLock<Option<Server>>>;

fn handle_shared_frame(store: &SharedStore, frame: &[u8], on_mutation: &(dyn Fn(&Server) + Sync)) -> Vec<u8> {
    let req = match Request::from_frame(frame) {
        Ok(r) => r,
        Err(e) => return Response::Error(format!("bad request frame: {e}")).to_frame(0),
    };
    if req.is_read_only() {
        let guard = store.read().expect("store lock");
        if let Some(server) = guard.as_ref() {
            let resp = server.handle_shared(&req).expect("read-only request");
            return resp.to_frame(server.params().segment_width());
        }
    }
    let mut guard = store.write().expect("store lock");
    let resp = serve_request(&mut guard, &req);
    if !req.is_read_only() && !matches!(resp, Response::Error(_)) {
        if let Some(server) = guard.as_ref() {
            on_mutation(server);
        }
    }
    resp.to_frame(response_width(&guard))
}

/// Accepts connections forever (or until `max_connections`), one thread each.
/// `on_mutation` runs under the write lock after every successful mutation.
pub fn serve(
    listener: TcpListener,
    store: SharedStore,
    max_connections: Option<usize>,
    on_mutation: Arc<dyn Fn(&Server) + Send + Sync>,
) -> io::Result<()> {
    let mut handles = Vec::new();
    for (k, conn) in listener.incoming().enumerate() {
        let mut stream = conn?;
        stream.set_nodelay(true)?;
        let store = Arc::clone(&store);
        let hook = Arc::clone(&on_mutation);
        handles.push(thread::spawn(move || -> io::Result<()> {
            while let Some(frame) = read_frame(&mut stream)? {
                let reply = handle_shared_frame(&store, &frame, &*hook);
                stream.write_all(&reply)?;
            }
            Ok(())
        }));
        if max_connections.is_some_and(|m| k + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}
