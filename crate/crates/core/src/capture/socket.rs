use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};

use super::{CaptureError, CaptureMode, CaptureSource, CaptureStats, HandoffQueue};
use crate::netmodel::ExtId;
use crate::time::WallClock;

const IDLE_POLL: Duration = Duration::from_millis(20);
const MAX_DATAGRAM: usize = 65_536;

/// UDP capture backend.
///
/// A background thread receives datagrams on the bound socket and feeds them
/// through a [`CaptureSource`]. The address of the most recent sender is
/// remembered so replies can be sent back to it.
pub struct SocketSource {
    socket: UdpSocket,
    local: SocketAddr,
    peer: Arc<Mutex<Option<SocketAddr>>>,
    capture: Arc<Mutex<CaptureSource>>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

pub fn open_socket_source(
    bind: SocketAddr,
    iface: ExtId,
    mode: CaptureMode,
    handoff: Arc<HandoffQueue>,
    clock: WallClock,
) -> Result<SocketSource, CaptureError> {
    let socket = UdpSocket::bind(bind).map_err(|source| CaptureError::Bind { addr: bind, source })?;
    let local = socket.local_addr()?;
    let capture = Arc::new(Mutex::new(CaptureSource::new(iface, mode, handoff, clock.now())));
    let peer = Arc::new(Mutex::new(None));
    let stop = Arc::new(AtomicBool::new(false));

    let worker = {
        let socket = socket.try_clone()?;
        let capture = capture.clone();
        let peer = peer.clone();
        let stop = stop.clone();
        std::thread::Builder::new()
            .name(format!("capture-{}", iface.0))
            .spawn(move || capture_loop(socket, capture, peer, stop, clock))?
    };
    debug!("capture iface {} listening on {local}", iface.0);

    Ok(SocketSource {
        socket,
        local,
        peer,
        capture,
        stop,
        worker: Some(worker),
    })
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn capture_loop(
    socket: UdpSocket,
    capture: Arc<Mutex<CaptureSource>>,
    peer: Arc<Mutex<Option<SocketAddr>>>,
    stop: Arc<AtomicBool>,
    clock: WallClock,
) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    while !stop.load(Ordering::Relaxed) {
        let now = clock.now();
        let wait = lock(&capture)
            .next_deadline()
            .map(|d| d.saturating_since(now).min(IDLE_POLL))
            .unwrap_or(IDLE_POLL)
            .max(Duration::from_micros(1));
        if let Err(e) = socket.set_read_timeout(Some(wait)) {
            warn!("capture: set_read_timeout failed: {e}");
            break;
        }
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                let ts = clock.now();
                *lock(&peer) = Some(from);
                if lock(&capture).on_packet(buf[..n].to_vec(), ts).is_err() {
                    break;
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) => {}
            Err(e) => {
                // ICMP port-unreachable from a departed peer surfaces here on
                // some platforms; keep listening
                debug!("capture: recv error: {e}");
            }
        }
        lock(&capture).on_timer(clock.now());
    }
    lock(&capture).close();
}

impl SocketSource {
    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    /// A handle on the bound socket for sending replies from the same port.
    pub fn socket(&self) -> std::io::Result<UdpSocket> {
        self.socket.try_clone()
    }

    pub fn peer(&self) -> Arc<Mutex<Option<SocketAddr>>> {
        self.peer.clone()
    }

    pub fn stats(&self) -> CaptureStats {
        lock(&self.capture).stats()
    }

    pub fn close(&mut self) -> CaptureStats {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
        self.stats()
    }
}

impl Drop for SocketSource {
    fn drop(&mut self) {
        self.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ProbeHeader;
    use std::time::Instant;

    fn wait_for(q: &HandoffQueue, n: usize) {
        let deadline = Instant::now() + Duration::from_secs(5);
        while q.len() < n && Instant::now() < deadline {
            q.wait_nonempty(Duration::from_millis(10));
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    #[test]
    fn receives_framed_datagrams() {
        let q = Arc::new(HandoffQueue::new(16));
        let mut src = open_socket_source(
            "127.0.0.1:0".parse().unwrap(),
            ExtId(3),
            CaptureMode::Immediate,
            q.clone(),
            WallClock::new(),
        )
        .unwrap();
        let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
        for seq in 0..3 {
            let b = ProbeHeader { seq, sent_ns: 99 }.encode(64);
            tx.send_to(&b, src.local_addr()).unwrap();
        }
        wait_for(&q, 3);
        let got = q.drain();
        assert_eq!(got.len(), 3);
        for (i, p) in got.iter().enumerate() {
            assert_eq!(p.iface, ExtId(3));
            assert_eq!(p.source_seq, i as u64);
            assert_eq!(ProbeHeader::decode(&p.payload).unwrap().seq, i as u64);
        }
        assert_eq!(*src.peer().lock().unwrap(), Some(tx.local_addr().unwrap()));
        let st = src.close();
        assert_eq!(st.offered, 3);
        assert!(st.is_conserved());
    }

    #[test]
    fn batched_socket_flushes_on_timer() {
        let q = Arc::new(HandoffQueue::new(16));
        let src = open_socket_source(
            "127.0.0.1:0".parse().unwrap(),
            ExtId(0),
            CaptureMode::batched(Duration::from_millis(10), 1 << 20).unwrap(),
            q.clone(),
            WallClock::new(),
        )
        .unwrap();
        let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
        tx.send_to(&[0u8; 32], src.local_addr()).unwrap();
        wait_for(&q, 1);
        assert_eq!(q.len(), 1);
        assert_eq!(src.stats().batches_flushed, 1);
    }

    #[test]
    fn bind_failure() {
        let taken = UdpSocket::bind("127.0.0.1:0").unwrap();
        let r = open_socket_source(
            taken.local_addr().unwrap(),
            ExtId(0),
            CaptureMode::Immediate,
            Arc::new(HandoffQueue::new(1)),
            WallClock::new(),
        );
        assert!(matches!(r, Err(CaptureError::Bind { .. })));
    }
}
