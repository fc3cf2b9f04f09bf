// Copyright (c) The CollaChain Contributors
// SPDX-License-Identifier: Apache-2.0

//! Append-only commit log.
//!
//! One record per committed block in `PerBlock` mode, or one per superblock in
//! `WholeSuperblock` mode. Every record carries the superblock's block count,
//! so replay knows when an index is complete even if a crash cut it short.
//! On disk the log is a stream of `u32`-length-prefixed canonical records; a
//! torn final frame is discarded on load.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use collachain_core::codec::{decode_list, frame, unframe, CodecResult, Reader, Writer};
use collachain_core::{Canonical, Digest, ExecOutcome, NodeId, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CommitMode {
    /// Execute and persist one block of the superblock at a time.
    #[default]
    PerBlock,
    /// Execute the whole superblock, then persist it in one record.
    WholeSuperblock,
}

impl CommitMode {
    pub fn name(self) -> &'static str {
        match self {
            CommitMode::PerBlock => "per_block",
            CommitMode::WholeSuperblock => "whole_superblock",
        }
    }
}

/// A sealed block and the transactions that passed lazy validation, with
/// their execution outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockRecord {
    pub slot: NodeId,
    pub digest: Digest,
    pub parent: Option<Digest>,
    pub timestamp: u64,
    pub txs: Vec<(Transaction, ExecOutcome)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LogRecord {
    pub index: u64,
    /// Number of blocks in the superblock this record belongs to.
    pub superblock_len: u32,
    pub blocks: Vec<BlockRecord>,
}

impl Canonical for BlockRecord {
    fn encode_into(&self, w: &mut Writer) -> CodecResult<()> {
        w.put_u32(self.slot.0);
        w.put_digest(&self.digest);
        w.put_opt_digest_fixed(self.parent.as_ref());
        w.put_u64(self.timestamp);
        w.put_len(self.txs.len())?;
        for (tx, outcome) in &self.txs {
            w.put_bytes(&tx.canonical_encode()?)?;
            w.put_u8(outcome.code());
        }
        Ok(())
    }

    fn decode_from(r: &mut Reader<'_>) -> CodecResult<Self> {
        let slot = NodeId(r.get_u32()?);
        let digest = r.get_digest()?;
        let parent = r.get_opt_digest_fixed()?;
        let timestamp = r.get_u64()?;
        let txs = decode_list(r, 5, |r| {
            let tx = Transaction::canonical_decode(&r.get_bytes()?)?;
            let outcome = ExecOutcome::from_code(r.get_u8()?).ok_or(
                collachain_core::CodecError::Malformed("execution outcome"),
            )?;
            Ok((tx, outcome))
        })?;
        Ok(Self {
            slot,
            digest,
            parent,
            timestamp,
            txs,
        })
    }
}

impl Canonical for LogRecord {
    fn encode_into(&self, w: &mut Writer) -> CodecResult<()> {
        w.put_u64(self.index);
        w.put_u32(self.superblock_len);
        w.put_len(self.blocks.len())?;
        for b in &self.blocks {
            b.encode_into(w)?;
        }
        Ok(())
    }

    fn decode_from(r: &mut Reader<'_>) -> CodecResult<Self> {
        let index = r.get_u64()?;
        let superblock_len = r.get_u32()?;
        let blocks = decode_list(r, 4 + 32 + 33 + 8 + 4, BlockRecord::decode_from)?;
        Ok(Self {
            index,
            superblock_len,
            blocks,
        })
    }
}

#[derive(Debug)]
pub struct PersistedLog {
    mode: CommitMode,
    records: Vec<LogRecord>,
    file: Option<(PathBuf, File)>,
}

impl PersistedLog {
    pub fn in_memory(mode: CommitMode) -> Self {
        Self {
            mode,
            records: Vec::new(),
            file: None,
        }
    }

    /// Open (or create) a log file, loading existing records. A torn tail
    /// is truncated away.
    pub fn open(path: &Path, mode: CommitMode) -> io::Result<Self> {
        let mut bytes = Vec::new();
        if path.exists() {
            File::open(path)?.read_to_end(&mut bytes)?;
        }
        let (frames, torn) = unframe(&bytes);
        let mut records = Vec::with_capacity(frames.len());
        let mut good = 0;
        for f in frames {
            match LogRecord::canonical_decode(f) {
                Ok(r) => {
                    records.push(r);
                    good += 4 + f.len();
                }
                Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if torn {
            file.set_len(good as u64)?;
        }
        Ok(Self {
            mode,
            records,
            file: Some((path.to_path_buf(), file)),
        })
    }

    pub fn mode(&self) -> CommitMode {
        self.mode
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All block records in commit order, independent of record granularity.
    pub fn blocks(&self) -> impl Iterator<Item = (u64, &BlockRecord)> {
        self.records
            .iter()
            .flat_map(|r| r.blocks.iter().map(move |b| (r.index, b)))
    }

    pub fn append(&mut self, record: LogRecord) -> io::Result<()> {
        if let Some(last) = self.records.last() {
            let last_slot = last.blocks.last().map(|b| b.slot);
            let first_slot = record.blocks.first().map(|b| b.slot);
            let ordered = record.index > last.index
                || (record.index == last.index
                    && matches!((last_slot, first_slot), (Some(a), Some(b)) if b > a));
            debug_assert!(ordered, "log records must be strictly ordered by (index, slot)");
        }
        if let Some((_, file)) = &mut self.file {
            let bytes = record
                .canonical_encode()
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            let framed = frame(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            file.write_all(&framed)?;
            file.flush()?;
        }
        self.records.push(record);
        Ok(())
    }
}
