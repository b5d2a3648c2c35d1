//! PTAG binary time-tag files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `PTAG` |
//! | 4 | 2 | format version (1) |
//! | 6 | 8 | resolution in ps |
//! | 14 | 1 | channel count |
//! | 15 | 5 | reserved, zero |
//! | 20 | 9·n | records: channel `u8`, time `u64` ps |
//!
//! The file carries no explicit duration; a stream read back from disk has
//! duration one past its last tag.

use std::io::{Read, Write};

use thiserror::Error;

use crate::stream::{StreamError, TimeTag, TimeTagStream};

pub const MAGIC: &[u8; 4] = b"PTAG";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
pub const RECORD_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum PtagError {
    #[error("byte {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

impl PtagError {
    fn at(offset: usize, message: impl Into<String>) -> Self {
        PtagError::Malformed {
            offset: offset as u64,
            message: message.into(),
        }
    }

    /// Byte offset of the problem, when the file itself is malformed.
    pub fn offset(&self) -> Option<u64> {
        match self {
            PtagError::Malformed { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

pub fn encode(stream: &TimeTagStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&stream.resolution_ps().to_le_bytes());
    out.push(stream.channel_count());
    out.extend_from_slice(&[0u8; 5]);
    for tag in stream.tags() {
        out.push(tag.channel);
        out.extend_from_slice(&tag.time_ps.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<TimeTagStream, PtagError> {
    if bytes.len() < HEADER_LEN {
        return Err(PtagError::at(
            bytes.len(),
            format!("header truncated, need {HEADER_LEN} bytes"),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(PtagError::at(0, "bad magic, expected \"PTAG\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(PtagError::at(4, format!("unsupported format version {version}")));
    }
    let resolution = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    if resolution == 0 {
        return Err(PtagError::at(6, "resolution must be at least 1 ps"));
    }
    let channel_count = bytes[14];
    let body = &bytes[HEADER_LEN..];
    let n_records = body.len() / RECORD_LEN;
    let mut tags = Vec::with_capacity(n_records);
    let mut prev: Option<(u64, u8)> = None;
    for (i, rec) in body.chunks(RECORD_LEN).enumerate() {
        let offset = HEADER_LEN + i * RECORD_LEN;
        if rec.len() < RECORD_LEN {
            return Err(PtagError::at(
                offset,
                format!("truncated record ({} of {RECORD_LEN} bytes)", rec.len()),
            ));
        }
        let channel = rec[0];
        let time_ps = u64::from_le_bytes(rec[1..].try_into().unwrap());
        if channel >= channel_count {
            return Err(PtagError::at(
                offset,
                format!("channel {channel} out of range (channel count {channel_count})"),
            ));
        }
        if prev.is_some_and(|p| (time_ps, channel) < p) {
            return Err(PtagError::at(offset, format!("record out of order at {time_ps} ps")));
        }
        if time_ps == u64::MAX {
            return Err(PtagError::at(offset, "time stamp at the end of the u64 range"));
        }
        prev = Some((time_ps, channel));
        tags.push(TimeTag::new(channel, time_ps));
    }
    let duration = tags.last().map_or(0, |t| t.time_ps + 1);
    Ok(TimeTagStream::new(resolution, duration, channel_count, tags)?)
}

pub fn write<W: Write>(mut writer: W, stream: &TimeTagStream) -> Result<(), PtagError> {
    writer.write_all(&encode(stream))?;
    Ok(())
}

pub fn read<R: Read>(mut reader: R) -> Result<TimeTagStream, PtagError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode(&bytes)
}
