//! Bit-exact checkpoint file format.
//!
//! Layout:
//!
//! ```text
//! "SCNV1\n"
//! <single-line UTF-8 JSON header>
//! <blank line>
//! <parameter blobs: little-endian f64 in manifest order>
//! <8 bytes: little-endian FNV-1a 64 hash of all preceding bytes>
//! ```
//!
//! The header carries the model spec, the graph adjacency, a manifest of
//! parameter tensors (name, value count, byte offset into the blob section),
//! and the architecture fingerprint. Loading rebuilds the masks from the
//! stored adjacency and rejects any file whose masked weight positions are
//! not exactly zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{fingerprint, scaffold, LayerParams, ModelParams, ModelSpec};

pub const MAGIC: &[u8; 6] = b"SCNV1\n";

/// Incremental 64-bit FNV-1a.
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Fnv1a {
        Fnv1a(0xcbf29ce484222325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    adjacency: AdjacencyDump,
    manifest: Vec<ManifestEntry>,
    fingerprint: u64,
}

#[derive(Serialize, Deserialize)]
struct AdjacencyDump {
    f: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq, Debug)]
struct ManifestEntry {
    name: String,
    len: usize,
    offset: usize,
}

/// Tensor names per layer, in serialization order.
fn tensor_views(params: &ModelParams) -> Vec<(String, &[f64])> {
    let mut out: Vec<(String, &[f64])> = Vec::new();
    for (i, layer) in params.layers.iter().enumerate() {
        match layer {
            LayerParams::Conv(k) => {
                out.push((format!("layer{i}.weights"), k.weights()));
                out.push((format!("layer{i}.bias"), k.bias()));
            }
            LayerParams::TransposeConv { kernel, bias } => {
                out.push((format!("layer{i}.weights"), kernel.weights()));
                out.push((format!("layer{i}.bias"), bias));
            }
            LayerParams::BatchNorm(p) => {
                out.push((format!("layer{i}.gamma"), &p.gamma));
                out.push((format!("layer{i}.beta"), &p.beta));
                out.push((format!("layer{i}.running_mean"), &p.running_mean));
                out.push((format!("layer{i}.running_var"), &p.running_var));
            }
            LayerParams::Dense(d) => {
                out.push((format!("layer{i}.w"), d.w()));
                out.push((format!("layer{i}.b"), d.b()));
            }
            LayerParams::Stateless => {}
        }
    }
    out
}

fn truncated(context: impl Into<String>) -> Error {
    Error::TruncatedFile {
        context: context.into(),
    }
}

/// Serialize parameters; the round trip through [`load_checkpoint`] is
/// bitwise-identical.
pub fn save_checkpoint(
    params: &ModelParams,
    spec: &ModelSpec,
    graph: &Graph,
    path: &Path,
) -> Result<()> {
    params.check_mask_closure()?;
    if params.fingerprint != fingerprint(spec, graph) {
        return Err(Error::FingerprintMismatch);
    }
    let views = tensor_views(params);
    let mut manifest = Vec::with_capacity(views.len());
    let mut offset = 0usize;
    for (name, values) in &views {
        manifest.push(ManifestEntry {
            name: name.clone(),
            len: values.len(),
            offset,
        });
        offset += values.len() * 8;
    }
    let header = Header {
        spec: spec.clone(),
        adjacency: AdjacencyDump {
            f: graph.f(),
            data: graph.adjacency().to_vec(),
        },
        manifest,
        fingerprint: params.fingerprint,
    };
    let header_json = serde_json::to_string(&header).expect("header serializes");

    let mut bytes = Vec::with_capacity(MAGIC.len() + header_json.len() + 2 + offset + 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(header_json.as_bytes());
    bytes.extend_from_slice(b"\n\n");
    for (_, values) in &views {
        for v in *values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut hash = Fnv1a::new();
    hash.update(&bytes);
    bytes.extend_from_slice(&hash.finish().to_le_bytes());
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Load and validate a checkpoint: magic, checksum, fingerprint, manifest
/// consistency, and mask closure.
pub fn load_checkpoint(path: &Path) -> Result<(ModelSpec, Graph, ModelParams)> {
    let bytes = std::fs::read(path).map_err(|_| Error::MissingFile {
        path: path.to_path_buf(),
    })?;
    if bytes.len() < MAGIC.len() + 2 + 8 {
        return Err(truncated("file shorter than any valid checkpoint"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let body_end = bytes.len() - 8;
    let mut hash = Fnv1a::new();
    hash.update(&bytes[..body_end]);
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    if hash.finish() != stored {
        return Err(Error::ChecksumMismatch);
    }

    let after_magic = &bytes[MAGIC.len()..body_end];
    let sep = after_magic
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| truncated("missing header terminator"))?;
    let header: Header = serde_json::from_slice(&after_magic[..sep])
        .map_err(|e| truncated(format!("bad header: {e}")))?;
    let blobs = &after_magic[sep + 2..];

    let graph = Graph::from_flat(header.adjacency.f, header.adjacency.data.clone())?;
    if header.fingerprint != fingerprint(&header.spec, &graph) {
        return Err(Error::FingerprintMismatch);
    }

    let mut params = scaffold(&header.spec, &graph)?;
    let expected: Vec<(String, usize)> = tensor_views(&params)
        .iter()
        .map(|(n, v)| (n.clone(), v.len()))
        .collect();
    if expected.len() != header.manifest.len() {
        return Err(truncated(format!(
            "manifest lists {} tensors, architecture has {}",
            header.manifest.len(),
            expected.len()
        )));
    }
    let mut offset = 0usize;
    for (entry, (name, len)) in header.manifest.iter().zip(&expected) {
        if &entry.name != name || entry.len != *len || entry.offset != offset {
            return Err(truncated(format!("manifest entry {} inconsistent", entry.name)));
        }
        offset += len * 8;
    }
    if blobs.len() != offset {
        return Err(truncated(format!(
            "blob section holds {} bytes, manifest needs {offset}",
            blobs.len()
        )));
    }

    let mut cursor = 0usize;
    for (i, layer) in params.layers.iter_mut().enumerate() {
        match layer {
            LayerParams::Conv(k) => {
                read_into(blobs, &mut cursor, k.weights_mut(), i)?;
                read_into(blobs, &mut cursor, k.bias_mut(), i)?;
            }
            LayerParams::TransposeConv { kernel, bias } => {
                read_into(blobs, &mut cursor, kernel.weights_mut(), i)?;
                read_into(blobs, &mut cursor, bias, i)?;
            }
            LayerParams::BatchNorm(p) => {
                read_into(blobs, &mut cursor, &mut p.gamma, i)?;
                read_into(blobs, &mut cursor, &mut p.beta, i)?;
                read_into(blobs, &mut cursor, &mut p.running_mean, i)?;
                read_into(blobs, &mut cursor, &mut p.running_var, i)?;
            }
            LayerParams::Dense(d) => {
                let (w_len, b_len) = (d.w().len(), d.b().len());
                read_into(blobs, &mut cursor, &mut d.w_mut()[..w_len], i)?;
                read_into(blobs, &mut cursor, &mut d.b_mut()[..b_len], i)?;
            }
            LayerParams::Stateless => {}
        }
    }
    params.check_mask_closure()?;
    Ok((header.spec, graph, params))
}

fn read_into(blobs: &[u8], cursor: &mut usize, target: &mut [f64], layer: usize) -> Result<()> {
    let need = target.len() * 8;
    let end = *cursor + need;
    if end > blobs.len() {
        return Err(truncated(format!("blobs end inside layer {layer}")));
    }
    for (k, chunk) in blobs[*cursor..end].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::NonFinite { index: *cursor / 8 + k });
        }
        target[k] = v;
    }
    *cursor = end;
    Ok(())
}
