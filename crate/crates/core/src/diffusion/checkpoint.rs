//! Checkpoint directories.
//!
//! ```text
//! <dir>/manifest.toml   format_version, spec_hash, spec, schedule, codec,
//!                       w_inpaint, w_control, one [[tensors]] entry per parameter
//! <dir>/params.bin      every parameter tensor, little-endian f64, row-major,
//!                       concatenated in manifest order; `offset`/`len` count values
//! <dir>/codec.bin       learned codec only: mean then basis, little-endian f64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::codec::{CodecMode, LatentCodec};
use super::model::{DualBranchModel, UNetSpec};
use super::params::{Group, ParamStore};
use super::schedule::DiffusionSchedule;
use super::tensor::Tensor;
use super::DiffusionError;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PARAMS_FILE: &str = "params.bin";
pub const CODEC_FILE: &str = "codec.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecEntry {
    pub mode: CodecMode,
    pub factor: usize,
    pub latent_channels: usize,
    /// Learned codec coefficient scale.
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// SHA-256 of the TOML-serialized spec and codec entry.
    pub spec_hash: String,
    pub w_inpaint: f64,
    pub w_control: f64,
    pub spec: UNetSpec,
    pub schedule: DiffusionSchedule,
    pub codec: CodecEntry,
    pub tensors: Vec<TensorEntry>,
}

/// Everything needed to sample: weights, codec and schedule.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: DualBranchModel,
    pub codec: LatentCodec,
    pub schedule: DiffusionSchedule,
}

pub fn spec_hash(spec: &UNetSpec, codec: &CodecEntry) -> String {
    #[derive(Serialize)]
    struct Hashed<'a> {
        spec: &'a UNetSpec,
        codec: &'a CodecEntry,
    }
    let text = toml::to_string(&Hashed { spec, codec }).expect("spec serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn codec_entry(codec: &LatentCodec) -> CodecEntry {
    CodecEntry {
        mode: codec.mode(),
        factor: codec.factor(),
        latent_channels: codec.latent_channels(),
        scale: codec.learned_parts().map(|(_, _, s)| s),
    }
}

fn f64s_to_bytes(values: &[f64], out: &mut Vec<u8>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>, DiffusionError> {
    if bytes.len() % 8 != 0 {
        return Err(DiffusionError::Checkpoint("blob length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<(), DiffusionError> {
    std::fs::create_dir_all(dir)?;
    let params = ckpt.model.params();
    let mut blob = Vec::new();
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0;
    for id in params.ids() {
        let t = params.get(id);
        tensors.push(TensorEntry {
            name: params.name(id).to_string(),
            group: params.group(id),
            shape: t.shape.clone(),
            offset,
            len: t.len(),
        });
        offset += t.len();
        f64s_to_bytes(&t.data, &mut blob);
    }
    let codec = codec_entry(&ckpt.codec);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec_hash: spec_hash(ckpt.model.spec(), &codec),
        w_inpaint: ckpt.model.w_inpaint,
        w_control: ckpt.model.w_control,
        spec: ckpt.model.spec().clone(),
        schedule: ckpt.schedule.clone(),
        codec,
        tensors,
    };
    let text = toml::to_string_pretty(&manifest).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    std::fs::write(dir.join(PARAMS_FILE), blob)?;
    if let Some((mean, basis, _)) = ckpt.codec.learned_parts() {
        let mut cblob = Vec::new();
        f64s_to_bytes(mean, &mut cblob);
        f64s_to_bytes(basis, &mut cblob);
        std::fs::write(dir.join(CODEC_FILE), cblob)?;
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, DiffusionError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DiffusionError::Checkpoint(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    if spec_hash(&manifest.spec, &manifest.codec) != manifest.spec_hash {
        return Err(DiffusionError::Checkpoint("spec_hash does not match spec".into()));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, DiffusionError> {
    let manifest = load_manifest(dir)?;
    manifest.schedule.validate()?;
    let values = bytes_to_f64s(&std::fs::read(dir.join(PARAMS_FILE))?)?;
    let mut store = ParamStore::default();
    for e in &manifest.tensors {
        if e.shape.iter().product::<usize>() != e.len || e.offset + e.len > values.len() {
            return Err(DiffusionError::Checkpoint(format!("bad layout for {}", e.name)));
        }
        let data = values[e.offset..e.offset + e.len].to_vec();
        store.add(e.name.clone(), e.group, Tensor::new(e.shape.clone(), data));
    }
    let c = &manifest.codec;
    let codec = match c.mode {
        CodecMode::Patchify => LatentCodec::patchify(c.factor),
        CodecMode::Learned => {
            let d = 3 * c.factor * c.factor;
            let v = bytes_to_f64s(&std::fs::read(dir.join(CODEC_FILE))?)?;
            if v.len() != d + d * c.latent_channels {
                return Err(DiffusionError::Checkpoint("codec blob size".into()));
            }
            let scale = c.scale.ok_or_else(|| DiffusionError::Checkpoint("learned codec needs scale".into()))?;
            LatentCodec::learned_from_parts(c.factor, v[..d].to_vec(), v[d..].to_vec(), scale)
        }
    };
    if codec.latent_channels() != manifest.spec.latent_channels {
        return Err(DiffusionError::Checkpoint("codec and spec disagree on latent channels".into()));
    }
    let model = DualBranchModel::from_parts(
        manifest.spec.clone(),
        manifest.schedule.num_train_steps,
        store,
        manifest.w_inpaint,
        manifest.w_control,
    )?;
    Ok(Checkpoint {
        model,
        codec,
        schedule: manifest.schedule,
    })
}
