//! Single-file checkpoint archive.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "LGANCKPT"
//! version      u32
//! manifest_len u32
//! manifest     manifest_len bytes of UTF-8 TOML
//! entry_count  u32
//! entry_count times:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   ndim       u32
//!   dims       ndim x u64
//!   values     prod(dims) x f32
//! ```
//!
//! Entries are named `<net>/<param>` for values and `<net>/adam.m/<param>`,
//! `<net>/adam.v/<param>` for the optimizer moments. They are written in
//! network order, then parameter order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compute::layers::ParamSpec;
use crate::compute::params::{OptimState, ParamSet};
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::models::discriminator::discriminator_network;
use crate::models::generator::Generator;
use crate::models::spec::{DiscriminatorSpec, GeneratorSpec};
use crate::models::storage::TrainerKind;

pub const MAGIC: &[u8; 8] = b"LGANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub trainer: TrainerKind,
    pub epoch: usize,
    pub seed: u64,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    /// Adam step counter per network.
    pub optimizer_steps: BTreeMap<String, u64>,
    pub losses: Option<LossBreakdown>,
}

/// Parameters and optimizer state of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub params: ParamSet,
    pub optim: OptimState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub networks: BTreeMap<String, NetworkState>,
}

/// Network names stored by each trainer, in archive order.
pub fn network_names(trainer: TrainerKind) -> &'static [&'static str] {
    match trainer {
        TrainerKind::Pix2pix => &["G", "D"],
        TrainerKind::Cyclegan => &["G", "F", "DX", "DY"],
    }
}

/// Whether a stored network is a generator.
pub fn is_generator(name: &str) -> bool {
    name == "G" || name == "F"
}

/// Names of the three archive entries (value, first moment, second moment)
/// of parameter `param` in network `net`.
pub fn entry_names(net: &str, param: &str) -> [String; 3] {
    [
        format!("{net}/{param}"),
        format!("{net}/adam.m/{param}"),
        format!("{net}/adam.v/{param}"),
    ]
}

/// Size in bytes of the name/shape header preceding an entry's values.
pub fn entry_header_bytes(name: &str, shape: &[usize]) -> u64 {
    4 + name.len() as u64 + 4 + 8 * shape.len() as u64
}

/// Parameter declarations of the network stored under `name`.
pub fn expected_specs(manifest: &Manifest, name: &str) -> Result<Vec<ParamSpec>> {
    if is_generator(name) {
        Ok(Generator::new(manifest.generator)?.param_specs())
    } else {
        Ok(discriminator_network(&manifest.discriminator)?.params())
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_entry(buf: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f32]) {
    put_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
    put_u32(buf, shape.len() as u32);
    for &d in shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn moment<'a>(map: &'a BTreeMap<String, Vec<f32>>, entry: &str, len: usize) -> Result<&'a [f32]> {
    let param = entry.rsplit_once("/").map_or(entry, |(_, p)| p);
    map.get(param)
        .filter(|a| a.len() == len)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Checkpoint(format!("optimizer state {entry} missing or mis-sized")))
}

impl Checkpoint {
    /// Check that every network named by the trainer is present and that its
    /// parameter shapes match what the manifest's specs build.
    pub fn validate(&self) -> Result<()> {
        for &net in network_names(self.manifest.trainer) {
            let state = self
                .networks
                .get(net)
                .ok_or_else(|| Error::Checkpoint(format!("network {net} missing")))?;
            let specs = expected_specs(&self.manifest, net)?;
            if specs.len() != state.params.len() {
                return Err(Error::Checkpoint(format!(
                    "network {net} has {} parameters, its spec declares {}",
                    state.params.len(),
                    specs.len()
                )));
            }
            for spec in &specs {
                let p = state
                    .params
                    .get(&spec.name)
                    .map_err(|_| Error::Checkpoint(format!("{net}/{} missing", spec.name)))?;
                if p.shape != spec.shape {
                    return Err(Error::Checkpoint(format!(
                        "{net}/{} has shape {:?}, spec expects {:?}",
                        spec.name, p.shape, spec.shape
                    )));
                }
            }
        }
        if self.networks.len() != network_names(self.manifest.trainer).len() {
            return Err(Error::Checkpoint("unexpected extra networks".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut manifest = self.manifest.clone();
        manifest.format_version = FORMAT_VERSION;
        manifest.optimizer_steps = self.networks.iter().map(|(k, s)| (k.clone(), s.optim.step)).collect();
        let text = toml::to_string(&manifest).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;

        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);
        put_u32(&mut buf, text.len() as u32);
        buf.extend_from_slice(text.as_bytes());
        let count: usize = self.networks.values().map(|s| 3 * s.params.len()).sum();
        put_u32(&mut buf, count as u32);
        for &net in network_names(self.manifest.trainer) {
            let state = &self.networks[net];
            for (pname, p) in state.params.iter() {
                let [value, m, v] = entry_names(net, pname);
                put_entry(&mut buf, &value, &p.shape, &p.value);
                put_entry(&mut buf, &m, &p.shape, moment(&state.optim.first_moment, &m, p.len())?);
                put_entry(&mut buf, &v, &p.shape, moment(&state.optim.second_moment, &v, p.len())?);
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint archive (bad magic)".into()));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let len = r.u32("manifest length")? as usize;
        let text = std::str::from_utf8(r.take(len, "manifest")?)
            .map_err(|_| Error::Checkpoint("manifest is not UTF-8".into()))?;
        let manifest: Manifest = toml::from_str(text).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        if manifest.format_version != version {
            return Err(Error::Checkpoint("manifest version disagrees with header".into()));
        }

        let count = r.u32("entry count")? as usize;
        let mut raw: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
        for i in 0..count {
            let ctx = format!("entry {i}");
            let name_len = r.u32(&ctx)? as usize;
            let name = std::str::from_utf8(r.take(name_len, &ctx)?)
                .map_err(|_| Error::Checkpoint(format!("{ctx}: name is not UTF-8")))?
                .to_string();
            let ndim = r.u32(&name)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64(&name)? as usize);
            }
            let n: usize = shape.iter().product();
            let data = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?, &name)?;
            let values = data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if raw.insert(name.clone(), (shape, values)).is_some() {
                return Err(Error::Checkpoint(format!("duplicate entry {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes after last entry", bytes.len() - r.pos)));
        }

        let mut networks = BTreeMap::new();
        for &net in network_names(manifest.trainer) {
            let mut params = ParamSet::new();
            let mut optim = OptimState {
                step: *manifest.optimizer_steps.get(net).unwrap_or(&0),
                ..Default::default()
            };
            for spec in expected_specs(&manifest, net)? {
                let [value, m, v] = entry_names(net, &spec.name);
                let mut fetch = |name: &str| -> Result<Vec<f32>> {
                    let (shape, data) = raw.remove(name).ok_or_else(|| Error::Checkpoint(format!("entry {name} missing")))?;
                    if shape != spec.shape {
                        return Err(Error::Checkpoint(format!(
                            "entry {name} has shape {shape:?}, spec expects {:?}",
                            spec.shape
                        )));
                    }
                    Ok(data)
                };
                params.insert(spec.name.clone(), spec.shape.clone(), fetch(&value)?)?;
                optim.first_moment.insert(spec.name.clone(), fetch(&m)?);
                optim.second_moment.insert(spec.name.clone(), fetch(&v)?);
            }
            networks.insert(net.to_string(), NetworkState { params, optim });
        }
        if let Some(extra) = raw.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected entry {extra}")));
        }
        Ok(Checkpoint { manifest, networks })
    }

    /// Write atomically: the archive goes to a sibling temporary file first,
    /// so an interrupted save never clobbers an existing checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(d) => Error::Checkpoint(format!("{}: {d}", path.display())),
            other => other,
        })
    }

    pub fn network(&self, name: &str) -> Result<&NetworkState> {
        self.networks
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint has no network {name}")))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated archive while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

/// File name of the checkpoint saved after `epoch`.
pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Checkpoint files in `dir`, sorted by name (and therefore by epoch).
pub fn list_checkpoints(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut v = Vec::new();
    if !dir.exists() {
        return Ok(v);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "ckpt") {
            v.push(p);
        }
    }
    v.sort();
    Ok(v)
}
