//! Probe framing carried in datagram payloads.
//!
//! Layout: 8-byte big-endian sequence number, 8-byte big-endian sender wall
//! timestamp in nanoseconds, then zero padding up to the configured size.

use thiserror::Error;

pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProbeHeader {
    pub seq: u64,
    pub sent_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("payload of {0} bytes is shorter than the {HEADER_LEN}-byte probe header")]
pub struct Truncated(pub usize);

impl ProbeHeader {
    pub fn encode(&self, size: usize) -> Vec<u8> {
        let mut buf = vec![0u8; size.max(HEADER_LEN)];
        self.write(&mut buf);
        buf
    }

    pub fn write(&self, buf: &mut [u8]) {
        buf[..8].copy_from_slice(&self.seq.to_be_bytes());
        buf[8..16].copy_from_slice(&self.sent_ns.to_be_bytes());
    }

    pub fn decode(payload: &[u8]) -> Result<Self, Truncated> {
        if payload.len() < HEADER_LEN {
            return Err(Truncated(payload.len()));
        }
        let mut seq = [0u8; 8];
        let mut ts = [0u8; 8];
        seq.copy_from_slice(&payload[..8]);
        ts.copy_from_slice(&payload[8..16]);
        Ok(Self {
            seq: u64::from_be_bytes(seq),
            sent_ns: u64::from_be_bytes(ts),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_big_endian() {
        let b = ProbeHeader { seq: 1, sent_ns: 0x0102 }.encode(20);
        assert_eq!(b.len(), 20);
        assert_eq!(&b[..8], &[0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(&b[8..16], &[0, 0, 0, 0, 0, 0, 1, 2]);
        assert_eq!(&b[16..], &[0; 4]);
    }

    #[test]
    fn short_payload() {
        assert_eq!(ProbeHeader::decode(&[0; 15]), Err(Truncated(15)));
    }

    proptest! {
        #[test]
        fn round_trip(seq: u64, ts: u64, size in 0usize..2000) {
            let h = ProbeHeader { seq, sent_ns: ts };
            let b = h.encode(size);
            prop_assert_eq!(b.len(), size.max(HEADER_LEN));
            prop_assert_eq!(ProbeHeader::decode(&b).unwrap(), h);
        }
    }
}
