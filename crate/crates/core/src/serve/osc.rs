//! Minimal OSC 1.0 message encoder, just enough for trigger output.
//!
//! A message is the address pattern, a type tag string, then big-endian
//! arguments, each section zero-padded to a four byte boundary. Only the
//! argument types we emit (int32, float32) are supported.

use crate::{Error, Result};
use byteorder::{BigEndian, WriteBytesExt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OscArg {
    Int(i32),
    Float(f32),
}

fn push_padded_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(s.as_bytes());
    buf.push(0);
    while buf.len() % 4 != 0 {
        buf.push(0);
    }
}

pub fn encode_message(address: &str, args: &[OscArg]) -> Result<Vec<u8>> {
    if !address.starts_with('/') || !address.is_ascii() || address.contains('\0') {
        return Err(Error::InvalidConfig(format!(
            "invalid OSC address {address:?}: must be ASCII and start with '/'"
        )));
    }
    let mut buf = Vec::with_capacity(32);
    push_padded_str(&mut buf, address);
    let mut tags = String::with_capacity(1 + args.len());
    tags.push(',');
    for arg in args {
        tags.push(match arg {
            OscArg::Int(_) => 'i',
            OscArg::Float(_) => 'f',
        });
    }
    push_padded_str(&mut buf, &tags);
    for arg in args {
        match arg {
            OscArg::Int(v) => buf.write_i32::<BigEndian>(*v).unwrap(),
            OscArg::Float(v) => buf.write_f32::<BigEndian>(*v).unwrap(),
        }
    }
    debug_assert_eq!(buf.len() % 4, 0);
    Ok(buf)
}

/// The datagram sent for one classified window: label then probability.
pub fn encode_trigger(address: &str, label: i32, probability: f32) -> Result<Vec<u8>> {
    encode_message(address, &[OscArg::Int(label), OscArg::Float(probability)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigger_message_bytes_are_stable() {
        let msg = encode_trigger("/motion", 3, 0.875).unwrap();
        let expected: [u8; 20] = [
            0x2F, 0x6D, 0x6F, 0x74, 0x69, 0x6F, 0x6E, 0x00, // "/motion" + NUL
            0x2C, 0x69, 0x66, 0x00, // ",if" + NUL
            0x00, 0x00, 0x00, 0x03, // int32 3
            0x3F, 0x60, 0x00, 0x00, // float32 0.875
        ];
        assert_eq!(msg, expected);
    }

    #[test]
    fn every_message_is_four_byte_aligned() {
        for addr in ["/a", "/ab", "/abc", "/abcd", "/trigger/out"] {
            for n in 0..4 {
                let args: Vec<OscArg> = (0..n).map(|i| OscArg::Int(i)).collect();
                let msg = encode_message(addr, &args).unwrap();
                assert_eq!(msg.len() % 4, 0, "addr={addr} n={n}");
            }
        }
    }

    #[test]
    fn address_must_lead_with_slash() {
        assert!(encode_message("motion", &[]).is_err());
        assert!(encode_message("/mot\u{e9}on", &[]).is_err());
    }

    #[test]
    fn string_padding_always_has_a_terminator() {
        // A 3-char address occupies exactly one 4-byte cell.
        let msg = encode_message("/ab", &[]).unwrap();
        assert_eq!(&msg[..4], &[b'/', b'a', b'b', 0]);
        // A 4-char address needs a fresh cell for the terminator.
        let msg = encode_message("/abc", &[]).unwrap();
        assert_eq!(&msg[..8], &[b'/', b'a', b'b', b'c', 0, 0, 0, 0]);
    }
}
