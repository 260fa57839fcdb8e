use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::{Arc, Mutex};

use crate::capture::Packet;
use crate::time::WallTime;

/// Where packets leaving through an external interface end up.
pub trait EmissionSink: Send {
    fn emit(&mut self, packet: &Packet, at: WallTime) -> io::Result<()>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub at: WallTime,
    pub packet: Packet,
}

/// Keeps every emission in memory. Clones share the same log.
#[derive(Debug, Clone, Default)]
pub struct RecordingSink {
    log: Arc<Mutex<Vec<Emission>>>,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emissions(&self) -> Vec<Emission> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EmissionSink for RecordingSink {
    fn emit(&mut self, packet: &Packet, at: WallTime) -> io::Result<()> {
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(Emission {
                at,
                packet: packet.clone(),
            });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum SinkTarget {
    Fixed(SocketAddr),
    /// Whoever last sent to the paired capture socket.
    LastPeer(Arc<Mutex<Option<SocketAddr>>>),
}

/// Sends the packet payload as a UDP datagram.
pub struct UdpSink {
    socket: UdpSocket,
    target: SinkTarget,
}

impl UdpSink {
    pub fn new(socket: UdpSocket, target: SinkTarget) -> Self {
        Self { socket, target }
    }
}

impl EmissionSink for UdpSink {
    fn emit(&mut self, packet: &Packet, _at: WallTime) -> io::Result<()> {
        let addr = match &self.target {
            SinkTarget::Fixed(a) => *a,
            SinkTarget::LastPeer(p) => p
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .ok_or_else(|| io::Error::new(io::ErrorKind::NotConnected, "no peer seen yet"))?,
        };
        self.socket.send_to(&packet.payload, addr).map(|_| ())
    }
}
