//! Binary time-tag files.
//!
//! A file is a 16-byte header followed by 16-byte records, all integers
//! little-endian:
//!
//! | offset | size | header field             |
//! |--------|------|--------------------------|
//! | 0      | 4    | magic `TTG1`             |
//! | 4      | 2    | format version (1)       |
//! | 6      | 1    | channel count            |
//! | 7      | 1    | reserved                 |
//! | 8      | 4    | timestamp resolution, ps |
//! | 12     | 4    | reserved                 |
//!
//! Each record is a `u64` timestamp in picoseconds, a `u8` channel and
//! seven zero bytes. Records are sorted by timestamp.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"TTG1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;

const IO_BUFFER: usize = 1 << 20;

/// One detection: a channel and a timestamp in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub timestamp_ps: u64,
    pub channel: u8,
}

impl TimeTag {
    pub fn new(timestamp_ps: u64, channel: u8) -> Self {
        Self {
            timestamp_ps,
            channel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagHeader {
    pub channel_count: u8,
    pub resolution_ps: u32,
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("not a tag file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported tag format version {0}")]
    BadVersion(u16),
    #[error("truncated record {record}")]
    Truncated { record: u64 },
    #[error("record {record}: timestamp {timestamp_ps} ps precedes {previous_ps} ps")]
    Unsorted {
        record: u64,
        previous_ps: u64,
        timestamp_ps: u64,
    },
    #[error("record {record}: channel {channel} outside declared count {channel_count}")]
    ChannelOutOfRange {
        record: u64,
        channel: u8,
        channel_count: u8,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TagHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        b[6] = self.channel_count;
        b[8..12].copy_from_slice(&self.resolution_ps.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_LEN]) -> Result<Self, TagError> {
        let magic = [b[0], b[1], b[2], b[3]];
        if magic != MAGIC {
            return Err(TagError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != FORMAT_VERSION {
            return Err(TagError::BadVersion(version));
        }
        Ok(Self {
            channel_count: b[6],
            resolution_ps: u32::from_le_bytes([b[8], b[9], b[10], b[11]]),
        })
    }
}

/// Fills `buf` completely, or reports how many bytes were available before
/// end of input.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Streaming reader that validates order and channel range as it goes.
pub struct TagReader<R: Read> {
    inner: R,
    header: TagHeader,
    record: u64,
    previous: u64,
    failed: bool,
}

impl<R: Read> TagReader<R> {
    pub fn new(mut inner: R) -> Result<Self, TagError> {
        let mut b = [0u8; HEADER_LEN];
        let n = read_full(&mut inner, &mut b)?;
        if n < 4 {
            let mut magic = [0u8; 4];
            magic[..n].copy_from_slice(&b[..n]);
            return Err(TagError::BadMagic(magic));
        }
        if n < HEADER_LEN {
            // Report a wrong magic or version before the short header.
            TagHeader::decode(&b)?;
            return Err(
                io::Error::new(io::ErrorKind::UnexpectedEof, "short tag file header").into(),
            );
        }
        let header = TagHeader::decode(&b)?;
        Ok(Self {
            inner,
            header,
            record: 0,
            previous: 0,
            failed: false,
        })
    }

    pub fn header(&self) -> TagHeader {
        self.header
    }

    fn next_tag(&mut self) -> Result<Option<TimeTag>, TagError> {
        let mut b = [0u8; RECORD_LEN];
        let n = read_full(&mut self.inner, &mut b)?;
        if n == 0 {
            return Ok(None);
        }
        let record = self.record;
        if n < RECORD_LEN {
            return Err(TagError::Truncated { record });
        }
        let timestamp_ps = u64::from_le_bytes(b[..8].try_into().unwrap());
        let channel = b[8];
        if channel >= self.header.channel_count {
            return Err(TagError::ChannelOutOfRange {
                record,
                channel,
                channel_count: self.header.channel_count,
            });
        }
        if record > 0 && timestamp_ps < self.previous {
            return Err(TagError::Unsorted {
                record,
                previous_ps: self.previous,
                timestamp_ps,
            });
        }
        self.previous = timestamp_ps;
        self.record += 1;
        Ok(Some(TimeTag {
            timestamp_ps,
            channel,
        }))
    }
}

impl TagReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TagError> {
        Self::new(BufReader::with_capacity(IO_BUFFER, File::open(path)?))
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TimeTag, TagError>;

    /// Yields tags until end of input; stops after the first error.
    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_tag() {
            Ok(tag) => tag.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Streaming writer. Rejects out-of-order tags and undeclared channels so
/// every file it produces reads back cleanly.
pub struct TagWriter<W: Write> {
    inner: W,
    header: TagHeader,
    record: u64,
    previous: u64,
}

impl<W: Write> TagWriter<W> {
    pub fn new(mut inner: W, header: TagHeader) -> Result<Self, TagError> {
        inner.write_all(&header.encode())?;
        Ok(Self {
            inner,
            header,
            record: 0,
            previous: 0,
        })
    }

    pub fn write(&mut self, tag: TimeTag) -> Result<(), TagError> {
        let record = self.record;
        if tag.channel >= self.header.channel_count {
            return Err(TagError::ChannelOutOfRange {
                record,
                channel: tag.channel,
                channel_count: self.header.channel_count,
            });
        }
        if record > 0 && tag.timestamp_ps < self.previous {
            return Err(TagError::Unsorted {
                record,
                previous_ps: self.previous,
                timestamp_ps: tag.timestamp_ps,
            });
        }
        let mut b = [0u8; RECORD_LEN];
        b[..8].copy_from_slice(&tag.timestamp_ps.to_le_bytes());
        b[8] = tag.channel;
        self.inner.write_all(&b)?;
        self.previous = tag.timestamp_ps;
        self.record += 1;
        Ok(())
    }

    pub fn records_written(&self) -> u64 {
        self.record
    }

    /// Flushes and returns the underlying sink.
    pub fn finish(mut self) -> Result<W, TagError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

impl TagWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: TagHeader) -> Result<Self, TagError> {
        Self::new(
            BufWriter::with_capacity(IO_BUFFER, File::create(path)?),
            header,
        )
    }
}

/// Reads a whole file into memory.
pub fn read_tags(path: impl AsRef<Path>) -> Result<(TagHeader, Vec<TimeTag>), TagError> {
    let reader = TagReader::open(path)?;
    let header = reader.header();
    let tags = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, tags))
}

pub fn write_tags(
    path: impl AsRef<Path>,
    header: TagHeader,
    tags: &[TimeTag],
) -> Result<(), TagError> {
    let mut writer = TagWriter::create(path, header)?;
    for &tag in tags {
        writer.write(tag)?;
    }
    writer.finish()?;
    Ok(())
}

/// Index of the first tag that breaks timestamp order, if any.
pub fn first_unsorted(tags: &[TimeTag]) -> Option<usize> {
    tags.windows(2)
        .position(|w| w[1].timestamp_ps < w[0].timestamp_ps)
        .map(|i| i + 1)
}
