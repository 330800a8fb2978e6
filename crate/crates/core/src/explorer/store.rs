use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// One `(s, a, r, s', done)` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Append-only sequence of sealed batches, one per deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStore {
    state_dim: usize,
    action_dim: usize,
    batches: Vec<Vec<Transition>>,
}

const BINARY_MAGIC: &[u8; 4] = b"MSBD";

impl DataStore {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            batches: Vec::new(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn push_batch(&mut self, batch: Vec<Transition>) -> Result<()> {
        for t in &batch {
            check_dim("DataStore (state)", self.state_dim, t.state.len())?;
            check_dim("DataStore (next state)", self.state_dim, t.next_state.len())?;
            check_dim("DataStore (action)", self.action_dim, t.action.len())?;
        }
        self.batches.push(batch);
        Ok(())
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn batch(&self, i: usize) -> &[Transition] {
        &self.batches[i]
    }

    pub fn batches(&self) -> &[Vec<Transition>] {
        &self.batches
    }

    pub fn newest(&self) -> Option<&[Transition]> {
        self.batches.last().map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every stored transition, oldest batch first.
    pub fn all(&self) -> Vec<&Transition> {
        self.batches.iter().flatten().collect()
    }

    pub fn all_cloned(&self) -> Vec<Transition> {
        self.batches.iter().flatten().cloned().collect()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = (0..self.state_dim).map(|i| format!("s{i}")).collect();
        h.extend((0..self.action_dim).map(|i| format!("a{i}")));
        h.push("r".into());
        h.extend((0..self.state_dim).map(|i| format!("ns{i}")));
        h.push("done".into());
        h.push("batch_index".into());
        h
    }

    /// Writes batch `i` as CSV: `s..., a..., r, s'..., done, batch_index`.
    pub fn write_batch_csv<W: Write>(&self, i: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::Parse(format!("csv write: {e}"));
        w.write_record(self.csv_header()).map_err(map)?;
        for t in &self.batches[i] {
            let mut row: Vec<String> = t.state.iter().map(f64::to_string).collect();
            row.extend(t.action.iter().map(f64::to_string));
            row.push(t.reward.to_string());
            row.extend(t.next_state.iter().map(f64::to_string));
            row.push(u8::from(t.done).to_string());
            row.push(i.to_string());
            w.write_record(&row).map_err(map)?;
        }
        w.flush().map_err(|e| Error::Parse(format!("csv flush: {e}")))?;
        Ok(())
    }

    /// Reads CSV rows (any number of batches, in any file order) and appends
    /// them grouped by `batch_index`.
    pub fn read_csv_rows(&mut self, text: &str) -> Result<()> {
        let (sd, ad) = (self.state_dim, self.action_dim);
        let width = 2 * sd + ad + 3;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut grouped: Vec<(usize, Vec<Transition>)> = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("csv row {}: {e}", row_no + 1)))?;
            if rec.len() != width {
                return Err(Error::Parse(format!(
                    "csv row {}: expected {width} columns, got {}",
                    row_no + 1,
                    rec.len()
                )));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("csv row {}: non-numeric cell {:?}", row_no + 1, &rec[k]))
                })
            };
            let state = (0..sd).map(num).collect::<Result<Vec<_>>>()?;
            let action = (sd..sd + ad).map(num).collect::<Result<Vec<_>>>()?;
            let reward = num(sd + ad)?;
            let next_state = (sd + ad + 1..2 * sd + ad + 1).map(num).collect::<Result<Vec<_>>>()?;
            let done = num(2 * sd + ad + 1)? != 0.0;
            let batch = num(2 * sd + ad + 2)? as usize;
            let t = Transition {
                state,
                action,
                reward,
                next_state,
                done,
            };
            match grouped.iter_mut().find(|(b, _)| *b == batch) {
                Some((_, v)) => v.push(t),
                None => grouped.push((batch, vec![t])),
            }
        }
        grouped.sort_by_key(|(b, _)| *b);
        for (_, batch) in grouped {
            self.push_batch(batch)?;
        }
        Ok(())
    }

    /// Compact binary mirror: magic, `u32` state/action dims and batch count,
    /// then per batch a `u32` length and rows of little-endian `f64`
    /// (`s, a, r, s', done`).
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = BINARY_MAGIC.to_vec();
        for v in [self.state_dim, self.action_dim, self.batches.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for b in &self.batches {
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            for t in b {
                let done = if t.done { 1.0 } else { 0.0 };
                for v in t
                    .state
                    .iter()
                    .chain(&t.action)
                    .chain(std::iter::once(&t.reward))
                    .chain(&t.next_state)
                    .chain(std::iter::once(&done))
                {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..4) != Some(BINARY_MAGIC.as_slice()) {
            return Err(Error::Parse("not a transition store file".into()));
        }
        let mut cursor = 4;
        let u32_at = |cursor: &mut usize| -> Result<usize> {
            let b = bytes
                .get(*cursor..*cursor + 4)
                .ok_or_else(|| Error::Parse("truncated transition store".into()))?;
            *cursor += 4;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        };
        let sd = u32_at(&mut cursor)?;
        let ad = u32_at(&mut cursor)?;
        let nb = u32_at(&mut cursor)?;
        let width = 2 * sd + ad + 2;
        let mut store = DataStore::new(sd, ad);
        for _ in 0..nb {
            let n = u32_at(&mut cursor)?;
            let body = bytes
                .get(cursor..cursor + 8 * width * n)
                .ok_or_else(|| Error::Parse("truncated transition store".into()))?;
            cursor += 8 * width * n;
            let vals: Vec<f64> = body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let batch = vals
                .chunks_exact(width)
                .map(|r| Transition {
                    state: r[..sd].to_vec(),
                    action: r[sd..sd + ad].to_vec(),
                    reward: r[sd + ad],
                    next_state: r[sd + ad + 1..2 * sd + ad + 1].to_vec(),
                    done: r[2 * sd + ad + 1] != 0.0,
                })
                .collect();
            store.push_batch(batch)?;
        }
        Ok(store)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_binary()).map_err(|e| Error::io(path, e))
    }
}
