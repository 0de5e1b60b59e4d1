//! Binary graph container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "RWGRAPH\0"
//! version u32      CONTAINER_VERSION
//! then a sequence of sections, each
//!   tag     4 ASCII bytes
//!   length  u64    payload bytes
//!   payload
//! ```
//!
//! Sections, in order:
//!
//! | tag    | payload                                                    |
//! |--------|------------------------------------------------------------|
//! | `META` | u64 nodes, u64 features, u64 classes, u64 canonical edges  |
//! | `FEAT` | nodes × features f64, row-major                            |
//! | `EDGE` | edges × (u64 u, u64 v) with u < v, sorted                  |
//! | `LABL` | nodes × u64                                                |
//! | `MASK` | nodes × u8: 0 none, 1 train, 2 val, 3 test                 |
//! | `SHA2` | SHA-256 of every byte before this section's tag            |
//!
//! Readers reject unknown versions, missing or reordered sections, trailing
//! bytes and checksum mismatches.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};

pub const CONTAINER_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"RWGRAPH\0";

fn section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

pub fn encode_graph(graph: &Graph) -> Vec<u8> {
    let n = graph.num_nodes();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());

    let meta: Vec<u8> = [
        n,
        graph.num_features(),
        graph.num_classes(),
        graph.num_edges(),
    ]
    .iter()
    .flat_map(|&x| (x as u64).to_le_bytes())
    .collect();
    section(&mut out, b"META", &meta);

    let feat: Vec<u8> = graph
        .features()
        .iter()
        .flat_map(|x| x.to_le_bytes())
        .collect();
    section(&mut out, b"FEAT", &feat);

    let edges: Vec<u8> = graph
        .edges()
        .iter()
        .flat_map(|e| {
            let (u, v) = e.endpoints();
            [(u as u64).to_le_bytes(), (v as u64).to_le_bytes()]
        })
        .flatten()
        .collect();
    section(&mut out, b"EDGE", &edges);

    let labels: Vec<u8> = graph
        .labels()
        .iter()
        .flat_map(|&l| (l as u64).to_le_bytes())
        .collect();
    section(&mut out, b"LABL", &labels);

    let split = graph.split();
    let masks: Vec<u8> = (0..n)
        .map(|i| {
            if split.train[i] {
                1
            } else if split.val[i] {
                2
            } else if split.test[i] {
                3
            } else {
                0
            }
        })
        .collect();
    section(&mut out, b"MASK", &masks);

    let digest = Sha256::digest(&out);
    section(&mut out, b"SHA2", &digest);
    out
}

pub fn save_graph(path: &Path, graph: &Graph) -> Result<()> {
    fs::write(path, encode_graph(graph))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!(
                "truncated: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn section(&mut self, tag: &[u8; 4]) -> std::result::Result<&'a [u8], String> {
        let found = self.take(4)?;
        if found != tag {
            return Err(format!(
                "expected section {} at offset {}, found {:?}",
                String::from_utf8_lossy(tag),
                self.pos - 4,
                String::from_utf8_lossy(found)
            ));
        }
        let len = self.u64()?;
        let len = usize::try_from(len).map_err(|_| "section length overflow".to_string())?;
        self.take(len)
    }
}

fn words(bytes: &[u8], expected: usize, what: &str) -> std::result::Result<Vec<u64>, String> {
    if bytes.len() != expected * 8 {
        return Err(format!(
            "{what} section has {} bytes, expected {}",
            bytes.len(),
            expected * 8
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn decode_graph(bytes: &[u8], path: &Path) -> Result<Graph> {
    let fail = |reason: String| Error::load(path, reason);
    if bytes.is_empty() {
        return Err(fail("empty file".into()));
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8).map_err(fail)? != MAGIC {
        return Err(fail("not a graph container (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4).map_err(fail)?.try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CONTAINER_VERSION,
        });
    }
    let meta = words(r.section(b"META").map_err(fail)?, 4, "META").map_err(fail)?;
    let [n, d, m, e] = [meta[0], meta[1], meta[2], meta[3]].map(|x| x as usize);
    let feat = r.section(b"FEAT").map_err(fail)?;
    if feat.len() != n.saturating_mul(d).saturating_mul(8) {
        return Err(fail(format!("FEAT section size does not match {n}x{d}")));
    }
    let values: Vec<f64> = feat
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let features = Array2::from_shape_vec((n, d), values).map_err(|e| fail(e.to_string()))?;
    let flat = words(r.section(b"EDGE").map_err(fail)?, 2 * e, "EDGE").map_err(fail)?;
    let edges: Vec<(usize, usize)> = flat
        .chunks_exact(2)
        .map(|p| (p[0] as usize, p[1] as usize))
        .collect();
    let labels: Vec<usize> = words(r.section(b"LABL").map_err(fail)?, n, "LABL")
        .map_err(fail)?
        .into_iter()
        .map(|x| x as usize)
        .collect();
    let masks = r.section(b"MASK").map_err(fail)?;
    if masks.len() != n {
        return Err(fail(format!("MASK section has {} entries for {n} nodes", masks.len())));
    }
    let mut split = Split::empty(n);
    for (i, &code) in masks.iter().enumerate() {
        match code {
            0 => {}
            1 => split.train[i] = true,
            2 => split.val[i] = true,
            3 => split.test[i] = true,
            c => return Err(fail(format!("unknown mask code {c} for node {i}"))),
        }
    }
    let body_end = r.pos;
    let digest = r.section(b"SHA2").map_err(fail)?;
    if digest != Sha256::digest(&bytes[..body_end]).as_slice() {
        return Err(fail("checksum mismatch".into()));
    }
    if r.pos != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let graph = Graph::new(features, edges, labels, m, split).map_err(|e| fail(e.to_string()))?;
    if graph.num_edges() != e {
        return Err(fail("duplicate or non-canonical edges".into()));
    }
    Ok(graph)
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    let bytes = fs::read(path).map_err(|e| Error::load(path, e.to_string()))?;
    decode_graph(&bytes, path)
}
