//! Grid shields on disk.
//!
//! Cells are run-length encoded over the row-major cell order in blocks of
//! `block` consecutive cells. The flat list holds, per run, the `block`
//! action-set bitmasks of one block followed by how many consecutive
//! blocks repeat them: `[m_0, .., m_{block-1}, run, ...]`. The block is the
//! product of the trailing discrete axis sizes, so a fastest-varying
//! discrete axis (such as a location) does not break every run.

use std::path::Path;

use gridshield::synthesis::OutOfBoundsMode;
use gridshield::{ActionSet, GridSpec, ShieldGrid};
use serde::{Deserialize, Serialize};

use crate::{check_header, digest, read, write, FileError};

pub const FORMAT: &str = "gridshield-shield";
pub const VERSION: u32 = 1;

/// How a shield was synthesized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShieldProvenance {
    pub model: String,
    pub property: String,
    pub samples_per_axis: u32,
    pub repeats: u32,
    pub seed: u64,
    pub out_of_bounds: OutOfBoundsMode,
    pub synthesis_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShieldFile {
    pub shield: ShieldGrid,
    pub provenance: Option<ShieldProvenance>,
}

#[derive(Serialize, Deserialize)]
struct Raw {
    format: String,
    version: u32,
    grid: GridSpec,
    actions: Vec<String>,
    block: u64,
    cells: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<ShieldProvenance>,
}

/// Block size used for `grid`: the product of its trailing discrete axis
/// sizes, or 1 when the last axis is continuous.
pub fn block_size(grid: &GridSpec) -> u64 {
    grid.axes()
        .iter()
        .rev()
        .take_while(|a| a.is_discrete())
        .map(|a| a.count() as u64)
        .product()
}

/// Run-length encodes `cells` in blocks of `block` cells; `block` must
/// divide the cell count.
pub fn encode_runs(cells: &[ActionSet], block: usize) -> Vec<u64> {
    assert!(block > 0 && cells.len() % block == 0, "block must divide the cell count");
    let mut out = Vec::new();
    for chunk in cells.chunks(block).collect::<Vec<_>>().chunk_by(|a, b| a == b) {
        out.extend(chunk[0].iter().map(|s| s.0));
        out.push(chunk.len() as u64);
    }
    out
}

/// Expands a block encoding into exactly `total` cells with masks below
/// `2^num_actions`. Errors name the offending list entry.
pub fn decode_runs(data: &[u64], block: u64, total: u64, num_actions: usize) -> Result<Vec<ActionSet>, FileError> {
    let bad = |offset: usize, message: String| FileError::Rle { offset, message };
    if block == 0 || total % block != 0 {
        return Err(bad(0, format!("block size {block} does not divide the {total} cells")));
    }
    let width = block as usize + 1;
    if data.len() % width != 0 {
        return Err(bad(
            data.len(),
            format!("{} entries are not whole runs of {width}", data.len()),
        ));
    }
    let blocks = total / block;
    let all = ActionSet::all(num_actions).0;
    let mut cells = Vec::with_capacity(total.min(1 << 24) as usize);
    let mut seen = 0u64;
    for (i, entry) in data.chunks_exact(width).enumerate() {
        let (masks, run) = (&entry[..width - 1], entry[width - 1]);
        let at = i * width;
        if let Some(k) = masks.iter().position(|&m| m & !all != 0) {
            return Err(bad(at + k, format!("action mask {} exceeds {num_actions} actions", masks[k])));
        }
        if run == 0 {
            return Err(bad(at + width - 1, "zero-length run".into()));
        }
        if run > blocks - seen {
            return Err(bad(
                at + width - 1,
                format!("run of {run} blocks overflows the grid's {blocks} blocks"),
            ));
        }
        seen += run;
        for _ in 0..run {
            cells.extend(masks.iter().map(|&m| ActionSet(m)));
        }
    }
    if seen < blocks {
        return Err(bad(
            data.len(),
            format!("runs cover {} of {total} cells", seen * block),
        ));
    }
    Ok(cells)
}

impl ShieldFile {
    pub fn new(shield: ShieldGrid, provenance: Option<ShieldProvenance>) -> Self {
        Self { shield, provenance }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let raw = Raw {
            format: FORMAT.into(),
            version: VERSION,
            grid: self.shield.grid().clone(),
            actions: self.shield.actions().to_vec(),
            block: block_size(self.shield.grid()),
            cells: encode_runs(self.shield.cells(), block_size(self.shield.grid()) as usize),
            provenance: self.provenance.clone(),
        };
        let mut bytes = serde_json::to_vec(&raw).expect("shield files serialize");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FileError> {
        let raw: Raw = serde_json::from_slice(bytes)?;
        check_header(&raw.format, raw.version, FORMAT, VERSION)?;
        if raw.actions.is_empty() || raw.actions.len() > 64 {
            return Err(FileError::Invalid(format!("{} actions; need 1 to 64", raw.actions.len())));
        }
        let cells = decode_runs(&raw.cells, raw.block, raw.grid.total_cells(), raw.actions.len())?;
        let shield = ShieldGrid::new(raw.grid, raw.actions, cells).map_err(|e| FileError::Invalid(e.to_string()))?;
        Ok(Self {
            shield,
            provenance: raw.provenance,
        })
    }

    /// Writes the file and returns the digest of the written bytes.
    pub fn save(&self, path: &Path) -> Result<String, FileError> {
        let bytes = self.to_json();
        write(path, &bytes)?;
        Ok(digest(&bytes))
    }

    /// Reads the file and returns it with the digest of its bytes.
    pub fn load(path: &Path) -> Result<(Self, String), FileError> {
        let bytes = read(path)?;
        Ok((Self::from_json(&bytes)?, digest(&bytes)))
    }
}
