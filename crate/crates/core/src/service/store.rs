//! On-disk layout, one directory per session:
//!
//! ```text
//! <data_dir>/<session>/session.json
//! <data_dir>/<session>/original.png
//! <data_dir>/<session>/canvas.png
//! <data_dir>/<session>/layers/<layer>.png
//! <data_dir>/<session>/results/<result>.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::session::{EditParams, GenerationResult, GuessState, Layer, ResultStatus, Session};
use crate::condition::{BrushStroke, BundleMeta, StrokeKind};
use crate::image::{BinaryMask, Image};

const SESSION_FILE: &str = "session.json";

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    id: u64,
    kind: StrokeKind,
    visible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    color: Option<[f32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    opacity: Option<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultRecord {
    id: String,
    prompt: String,
    status: ResultStatus,
    meta: Option<BundleMeta>,
    layers: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionRecord {
    id: String,
    layers: Vec<LayerRecord>,
    next_layer: u64,
    params: EditParams,
    guess: GuessState,
    results: Vec<ResultRecord>,
    next_result: u64,
    accepted: Vec<String>,
}

/// Write-through session persistence; a store without a root keeps nothing.
#[derive(Debug, Clone, Default)]
pub struct SessionStore {
    root: Option<PathBuf>,
}

impl SessionStore {
    pub fn new(root: Option<PathBuf>) -> Self {
        Self { root }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn save(&self, session: &Session) -> std::io::Result<()> {
        let Some(root) = &self.root else { return Ok(()) };
        let dir = root.join(&session.id);
        fs::create_dir_all(dir.join("layers"))?;
        fs::create_dir_all(dir.join("results"))?;
        let io_err = |e: crate::image::RasterError| std::io::Error::other(e.to_string());

        let original = dir.join("original.png");
        if !original.exists() {
            session.original.save_png(&original).map_err(io_err)?;
        }
        write_atomic(&dir.join("canvas.png"), &session.canvas.encode_png())?;

        let mut layers = Vec::with_capacity(session.layers.len());
        for l in &session.layers {
            let path = dir.join("layers").join(format!("{}.png", l.id));
            if !path.exists() {
                write_atomic(&path, &l.stroke.mask().encode_png())?;
            }
            let (color, opacity) = match &l.stroke {
                BrushStroke::Color { color, opacity, .. } => (Some(*color), Some(*opacity)),
                _ => (None, None),
            };
            layers.push(LayerRecord {
                id: l.id,
                kind: l.stroke.kind(),
                visible: l.visible,
                color,
                opacity,
            });
        }
        for entry in fs::read_dir(dir.join("layers"))? {
            let path = entry?.path();
            let live = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|id| session.layers.iter().any(|l| l.id == id));
            if !live {
                fs::remove_file(path)?;
            }
        }

        let mut results = Vec::with_capacity(session.results.len());
        for r in &session.results {
            let path = dir.join("results").join(format!("{}.png", r.id));
            match &r.image {
                Some(img) if !path.exists() => write_atomic(&path, &img.encode_png())?,
                None if path.exists() => fs::remove_file(&path)?,
                _ => {}
            }
            results.push(ResultRecord {
                id: r.id.clone(),
                prompt: r.prompt.clone(),
                status: r.status,
                meta: r.meta.clone(),
                layers: r.layers.clone(),
            });
        }

        let record = SessionRecord {
            id: session.id.clone(),
            layers,
            next_layer: session.next_layer,
            params: session.params,
            guess: session.guess.clone(),
            results,
            next_result: session.next_result,
            accepted: session.accepted.clone(),
        };
        let json = serde_json::to_vec_pretty(&record).map_err(std::io::Error::other)?;
        write_atomic(&dir.join(SESSION_FILE), &json)
    }

    /// Every stored session. Generations and predictions that were running
    /// when the process stopped are dropped.
    pub fn load_all(&self) -> std::io::Result<Vec<Session>> {
        let Some(root) = &self.root else { return Ok(Vec::new()) };
        if !root.exists() {
            return Ok(Vec::new());
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(SESSION_FILE).exists())
            .collect();
        dirs.sort();
        dirs.iter().map(|d| load_session(d)).collect()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn load_session(dir: &Path) -> std::io::Result<Session> {
    let bad = |e: String| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", dir.display()));
    let record: SessionRecord =
        serde_json::from_slice(&fs::read(dir.join(SESSION_FILE))?).map_err(|e| bad(e.to_string()))?;
    let load_png = |p: PathBuf| Image::load_png(&p).map_err(|e| bad(e.to_string()));
    let original = load_png(dir.join("original.png"))?;
    let canvas = load_png(dir.join("canvas.png"))?;

    let mut layers = Vec::with_capacity(record.layers.len());
    for l in record.layers {
        let mask = BinaryMask::load_png(&dir.join("layers").join(format!("{}.png", l.id))).map_err(|e| bad(e.to_string()))?;
        let stroke = match l.kind {
            StrokeKind::Add => BrushStroke::add(mask),
            StrokeKind::Subtract => BrushStroke::subtract(mask),
            StrokeKind::Color => BrushStroke::color(mask, l.color.unwrap_or([0.0; 3]), l.opacity.unwrap_or(1.0))
                .map_err(|e| bad(e.to_string()))?,
        };
        layers.push(Layer {
            id: l.id,
            stroke,
            visible: l.visible,
        });
    }

    let mut results = Vec::with_capacity(record.results.len());
    for r in record.results {
        if r.status == ResultStatus::Pending {
            continue;
        }
        let path = dir.join("results").join(format!("{}.png", r.id));
        let image = if path.exists() { Some(load_png(path)?) } else { None };
        results.push(GenerationResult {
            id: r.id,
            prompt: r.prompt,
            status: r.status,
            image,
            meta: r.meta,
            layers: r.layers,
        });
    }

    let mut guess = record.guess;
    if guess.status == super::session::GuessStatus::Pending {
        guess.status = super::session::GuessStatus::Failed;
        guess.error = Some("interrupted by restart".into());
    }
    Ok(Session {
        id: record.id,
        original,
        canvas,
        layers,
        next_layer: record.next_layer,
        params: record.params,
        guess,
        results,
        next_result: record.next_result,
        accepted: record.accepted,
    })
}
