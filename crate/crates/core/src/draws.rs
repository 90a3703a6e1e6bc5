//! Posterior draw collections and their JSON-lines file format.
//!
//! A draws file is one JSON record per line: a `header` record first, one
//! `draw` record per retained state, an optional `relabeling` provenance
//! record, and a closing `footer` with acceptance diagnostics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::TimePartition;
use crate::model::{Hyperparams, LatentState};
use crate::{Error, Result};

pub const DRAWS_SCHEMA_VERSION: u32 = 1;

/// Provenance and model context for a chain's draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsHeader {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub hyper: Hyperparams,
    pub partition: TimePartition,
    pub n_events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog_hash: Option<String>,
    pub chain: usize,
}

/// One retained post-burn-in state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub sweep: usize,
    pub log_post: f64,
    pub state: LatentState,
}

/// Post-burn-in Metropolis acceptance rates by move family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub alpha: f64,
    pub beta_interior: f64,
}

/// Record of a label-switching resolution applied to a draws file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelProvenance {
    /// Index into the draw sequence of the pivot allocation.
    pub pivot_index: usize,
    /// Per-draw permutations, `perm[old] = new`.
    pub permutations: Vec<Vec<usize>>,
    /// Per-draw allocation mismatches against the pivot after relabeling.
    pub mismatches: Vec<usize>,
}

/// An ordered collection of retained draws plus chain metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub header: DrawsHeader,
    pub draws: Vec<Draw>,
    pub acceptance: Option<AcceptanceRates>,
    pub relabeling: Option<RelabelProvenance>,
}

impl PosteriorDraws {
    pub fn states(&self) -> impl Iterator<Item = &LatentState> {
        self.draws.iter().map(|d| &d.state)
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum DrawsRecord {
    Header(DrawsHeader),
    Draw(Draw),
    Relabeling(RelabelProvenance),
    Footer {
        acceptance: Option<AcceptanceRates>,
        draws: usize,
    },
}

/// Streaming writer: header first, then draws as they arrive, footer last.
pub struct DrawsWriter {
    out: BufWriter<File>,
    draws_written: usize,
}

impl DrawsWriter {
    pub fn create(path: &Path, header: &DrawsHeader) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &DrawsRecord::Header(header.clone()))?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            draws_written: 0,
        })
    }

    pub fn write_draw(&mut self, draw: &Draw) -> Result<()> {
        serde_json::to_writer(&mut self.out, &DrawsRecord::Draw(draw.clone()))?;
        self.out.write_all(b"\n")?;
        self.draws_written += 1;
        Ok(())
    }

    pub fn write_relabeling(&mut self, prov: &RelabelProvenance) -> Result<()> {
        serde_json::to_writer(&mut self.out, &DrawsRecord::Relabeling(prov.clone()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self, acceptance: Option<AcceptanceRates>) -> Result<()> {
        serde_json::to_writer(
            &mut self.out,
            &DrawsRecord::Footer {
                acceptance,
                draws: self.draws_written,
            },
        )?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a complete collection in one call.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = DrawsWriter::create(path, &draws.header)?;
    for d in &draws.draws {
        w.write_draw(d)?;
    }
    if let Some(prov) = &draws.relabeling {
        w.write_relabeling(prov)?;
    }
    w.finish(draws.acceptance)
}

/// Reads a complete draws file into memory.
pub fn read_draws(path: &Path) -> Result<PosteriorDraws> {
    let reader = BufReader::new(File::open(path)?);
    let mut header: Option<DrawsHeader> = None;
    let mut draws = Vec::new();
    let mut acceptance = None;
    let mut relabeling = None;
    let mut footer_count: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DrawsRecord = serde_json::from_str(&line).map_err(|e| Error::Data(format!(
            "{}:{}: bad draws record: {e}",
            path.display(),
            idx + 1
        )))?;
        match record {
            DrawsRecord::Header(h) => {
                if h.schema_version != DRAWS_SCHEMA_VERSION {
                    return Err(Error::Data(format!(
                        "unsupported draws schema {}",
                        h.schema_version
                    )));
                }
                header = Some(h);
            }
            DrawsRecord::Draw(d) => draws.push(d),
            DrawsRecord::Relabeling(r) => relabeling = Some(r),
            DrawsRecord::Footer {
                acceptance: acc,
                draws: n,
            } => {
                acceptance = acc;
                footer_count = Some(n);
            }
        }
    }
    let header = header.ok_or_else(|| {
        Error::Data(format!("{}: missing header record", path.display()))
    })?;
    if let Some(n) = footer_count {
        if n != draws.len() {
            return Err(Error::Data(format!(
                "draws file lists {n} draws but contains {}",
                draws.len()
            )));
        }
    }
    Ok(PosteriorDraws {
        header,
        draws,
        acceptance,
        relabeling,
    })
}

/// Streams draw records one at a time without holding the file in memory.
pub struct DrawsReader {
    lines: std::io::Lines<BufReader<File>>,
    pub header: DrawsHeader,
}

impl DrawsReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Data(format!("{}: empty draws file", path.display())))??;
        let record: DrawsRecord = serde_json::from_str(&first)
            .map_err(|e| Error::Data(format!("{}: bad header: {e}", path.display())))?;
        match record {
            DrawsRecord::Header(header) => Ok(Self { lines, header }),
            _ => Err(Error::Data(format!(
                "{}: first record is not a header",
                path.display()
            ))),
        }
    }
}

impl Iterator for DrawsReader {
    type Item = Result<Draw>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<DrawsRecord>(&line) {
                Ok(DrawsRecord::Draw(d)) => return Some(Ok(d)),
                Ok(_) => continue,
                Err(e) => return Some(Err(Error::Data(format!("bad draws record: {e}")))),
            }
        }
    }
}
