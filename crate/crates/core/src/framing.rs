//! Shared container for checkpoints and datasets: a first line
//! `<magic> <header-bytes> <payload-fnv1a-hex>`, a TOML header of exactly
//! that many bytes, then a little-endian float64 payload.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const PAYLOAD_DTYPE: &str = "f64le";

/// 64-bit FNV-1a.
#[derive(Clone, Copy, Debug)]
pub struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn write_f64(&mut self, x: f64) {
        self.write(&x.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Payload bytes with the digest recorded in the preamble.
#[derive(Clone, Copy, Debug)]
pub struct Payload<'a> {
    pub bytes: &'a [u8],
    pub checksum: u64,
}

pub fn encode<H: Serialize>(magic: &str, header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let text = toml::to_string(header).map_err(|e| Error::Format(format!("header encode: {e}")))?;
    let mut fnv = Fnv::default();
    payload.iter().for_each(|&x| fnv.write_f64(x));
    let mut out = format!("{magic} {} {:016x}\n", text.len(), fnv.finish()).into_bytes();
    out.extend_from_slice(text.as_bytes());
    out.reserve(payload.len() * 8);
    for x in payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

/// Splits a container into its parsed header and raw payload bytes.
pub fn decode<'a, H: DeserializeOwned>(magic: &str, bytes: &'a [u8]) -> Result<(H, Payload<'a>)> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Format("missing preamble line".into()))?;
    let pre = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("preamble is not UTF-8".into()))?;
    let mut parts = pre.split(' ');
    if parts.next() != Some(magic) {
        return Err(Error::Format(format!("expected magic `{magic}`, found `{pre}`")));
    }
    let len: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad header length in `{pre}`")))?;
    let checksum = parts
        .next()
        .and_then(|s| u64::from_str_radix(s, 16).ok())
        .ok_or_else(|| Error::Format(format!("bad payload checksum in `{pre}`")))?;
    let start = nl + 1;
    if bytes.len() < start + len {
        return Err(Error::Format("header shorter than declared".into()));
    }
    let text =
        std::str::from_utf8(&bytes[start..start + len]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let header: H = toml::from_str(text).map_err(|e| Error::Format(format!("header: {e}")))?;
    Ok((header, Payload { bytes: &bytes[start + len..], checksum }))
}

/// Reads exactly `count` floats, rejecting short or over-long payloads and
/// payloads whose digest differs from the preamble.
pub fn read_floats(payload: Payload<'_>, count: usize) -> Result<Vec<f64>> {
    let expected = count * 8;
    if payload.bytes.len() != expected {
        return Err(Error::Truncated { expected, found: payload.bytes.len() });
    }
    let mut fnv = Fnv::default();
    fnv.write(payload.bytes);
    if fnv.finish() != payload.checksum {
        return Err(Error::Format(format!(
            "payload checksum {:016x} does not match recorded {:016x}",
            fnv.finish(),
            payload.checksum
        )));
    }
    Ok(payload.bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn check_dtype(tag: &str) -> Result<()> {
    if tag != PAYLOAD_DTYPE {
        return Err(Error::Format(format!("dtype `{tag}` unsupported, expected `{PAYLOAD_DTYPE}`")));
    }
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}
