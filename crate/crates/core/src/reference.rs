//! Measured strategy sweeps on eight Ascend 910B NPUs (one host, 60 GB
//! each), 4M-token training steps. Values are kept exactly as published.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub dp: u32,
    pub pp: u32,
    pub tp: u32,
    pub cp: u32,
    pub step_time_s: f64,
    pub throughput_ktok_s: f64,
    pub mem_gb: f64,
    pub mfu_pct: f64,
}

impl ReferenceRow {
    pub fn tuple(&self) -> (u32, u32, u32, u32) {
        (self.dp, self.pp, self.tp, self.cp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceTable {
    pub id: &'static str,
    pub title: &'static str,
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTable {
    pub fn best(&self) -> &ReferenceRow {
        self.rows
            .iter()
            .max_by(|a, b| a.mfu_pct.total_cmp(&b.mfu_pct))
            .expect("reference tables are non-empty")
    }

    pub fn worst(&self) -> &ReferenceRow {
        self.rows
            .iter()
            .min_by(|a, b| a.mfu_pct.total_cmp(&b.mfu_pct))
            .expect("reference tables are non-empty")
    }
}

struct Asset {
    id: &'static str,
    title: &'static str,
    text: &'static str,
}

const ASSETS: [Asset; 4] = [
    Asset {
        id: "llama7b",
        title: "LLaMA 7B",
        text: include_str!("../assets/reference/llama7b.csv"),
    },
    Asset {
        id: "llama1b",
        title: "LLaMA 1B",
        text: include_str!("../assets/reference/llama1b.csv"),
    },
    Asset {
        id: "mamba7b",
        title: "Mamba 7B",
        text: include_str!("../assets/reference/mamba7b.csv"),
    },
    Asset {
        id: "mamba1b",
        title: "Mamba 1B",
        text: include_str!("../assets/reference/mamba1b.csv"),
    },
];

const BEST_WORST: &str = include_str!("../assets/reference/best_worst.csv");

pub const REFERENCE_IDS: [&str; 4] = ["llama7b", "llama1b", "mamba7b", "mamba1b"];

/// SHA-256 of the embedded CSV text for `id`, or of the best/worst summary
/// for `"best_worst"`.
pub fn checksum(id: &str) -> Result<String> {
    let text = if id == "best_worst" {
        BEST_WORST
    } else {
        asset(id)?.text
    };
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn asset(id: &str) -> Result<&'static Asset> {
    ASSETS
        .iter()
        .find(|a| a.id == id)
        .ok_or_else(|| Error::UnknownReference(id.to_string()))
}

pub fn reference_table(id: &str) -> Result<ReferenceTable> {
    let asset = asset(id)?;
    let mut reader = csv::Reader::from_reader(asset.text.as_bytes());
    let mut rows: Vec<ReferenceRow> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Reference {
            id: id.into(),
            message: e.to_string(),
        })?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Reference {
                id: id.into(),
                message: format!("missing column {i}"),
            })
        };
        let int = |i: usize| -> Result<u32> {
            field(i)?.parse().map_err(|e| Error::Reference {
                id: id.into(),
                message: format!("column {i}: {e}"),
            })
        };
        let float = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|e| Error::Reference {
                id: id.into(),
                message: format!("column {i}: {e}"),
            })
        };
        let row = ReferenceRow {
            dp: int(0)?,
            pp: int(1)?,
            tp: int(2)?,
            cp: int(3)?,
            step_time_s: float(4)?,
            throughput_ktok_s: float(5)?,
            mem_gb: float(6)?,
            mfu_pct: float(7)?,
        };
        if rows.iter().any(|r| r.tuple() == row.tuple()) {
            return Err(Error::Reference {
                id: id.into(),
                message: format!("duplicate row {:?}", row.tuple()),
            });
        }
        rows.push(row);
    }
    Ok(ReferenceTable {
        id: asset.id,
        title: asset.title,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BestWorst {
    pub best: (u32, u32, u32, u32),
    pub best_mfu_pct: f64,
    pub worst: (u32, u32, u32, u32),
    pub worst_mfu_pct: f64,
}

/// Published best and worst configuration per model.
pub fn best_worst(id: &str) -> Result<BestWorst> {
    for line in BEST_WORST.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.first() != Some(&id) {
            continue;
        }
        let bad = |e: String| Error::Reference {
            id: id.into(),
            message: e,
        };
        let n = |i: usize| cols[i].parse::<u32>().map_err(|e| bad(e.to_string()));
        let f = |i: usize| cols[i].parse::<f64>().map_err(|e| bad(e.to_string()));
        return Ok(BestWorst {
            best: (n(1)?, n(2)?, n(3)?, n(4)?),
            best_mfu_pct: f(5)?,
            worst: (n(6)?, n(7)?, n(8)?, n(9)?),
            worst_mfu_pct: f(10)?,
        });
    }
    Err(Error::UnknownReference(id.to_string()))
}
