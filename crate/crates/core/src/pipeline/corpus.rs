//! On-disk corpus layout.
//!
//! ```text
//! corpus.json              index: scene spec, seeds, scene ids
//! annotations.json         plate annotations of every scene
//! <id>.image.pft           gray input image (H x W x 1)
//! <id>.tensor.pft          encoded features
//! <id>.seg.pgm             segmentation ids, binary PGM
//! <id>.disp.pft            disparity (H x W x 1)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::external::{parse_pgm, write_pgm};
use crate::error::{Error, Result};
use crate::harness::haar::LL2;
use crate::harness::{generate_corpus, HarnessCorpus, HarnessModel, Scene, SceneSpec};
use crate::metrics::{load_annotations, save_annotations, PlateAnnotation};
use crate::tensor::{load_tensor, save_tensor, FeatureTensor, Image, TaskLabels};

pub const CORPUS_FORMAT: &str = "pfan-corpus/1";
pub const INDEX_FILE: &str = "corpus.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub format: String,
    pub spec: SceneSpec,
    pub first_seed: u64,
    pub scenes: Vec<String>,
    /// Base-set size suited to this corpus' feature layout.
    pub recommended_base_size: usize,
}

pub fn image_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.image.pft"))
}

pub fn tensor_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.tensor.pft"))
}

pub fn seg_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.seg.pgm"))
}

pub fn disp_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.disp.pft"))
}

/// Files of one scene, in a fixed order.
pub fn scene_files(dir: &Path, id: &str) -> [PathBuf; 4] {
    [
        image_path(dir, id),
        tensor_path(dir, id),
        seg_path(dir, id),
        disp_path(dir, id),
    ]
}

fn save_scene(dir: &Path, scene: &Scene) -> Result<()> {
    let (h, w) = (scene.image.height(), scene.image.width());
    save_tensor(&scene.image.to_tensor()?, image_path(dir, &scene.id))?;
    save_tensor(&HarnessModel.encode(&scene.image)?, tensor_path(dir, &scene.id))?;
    write_pgm(&seg_path(dir, &scene.id), w, h, scene.labels.segmentation())?;
    let disp = FeatureTensor::new(h, w, 1, scene.labels.disparity().to_vec())?;
    save_tensor(&disp, disp_path(dir, &scene.id))
}

/// Generates `count` scenes from `first_seed` on and writes them to `dir`.
pub fn write_corpus(dir: &Path, spec: &SceneSpec, first_seed: u64, count: usize) -> Result<CorpusIndex> {
    if count == 0 {
        return Err(Error::Argument("corpus needs at least one scene".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scenes = generate_corpus(spec, first_seed, count)?;
    scenes.par_iter().try_for_each(|s| save_scene(dir, s))?;
    let plates: Vec<PlateAnnotation> = scenes.iter().flat_map(|s| s.plates.iter().cloned()).collect();
    save_annotations(&plates, dir.join(ANNOTATIONS_FILE))?;
    let index = CorpusIndex {
        format: CORPUS_FORMAT.into(),
        spec: spec.with_seed(first_seed),
        first_seed,
        scenes: scenes.into_iter().map(|s| s.id).collect(),
        recommended_base_size: LL2 + 1,
    };
    let path = dir.join(INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

pub fn read_index(dir: &Path) -> Result<CorpusIndex> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: CorpusIndex = serde_json::from_str(&text)?;
    if index.format != CORPUS_FORMAT {
        return Err(Error::Format(format!("unsupported corpus format {:?}", index.format)));
    }
    if index.scenes.is_empty() {
        return Err(Error::Argument(format!("corpus {} is empty", dir.display())));
    }
    Ok(index)
}

fn load_scene(dir: &Path, id: &str, classes: u8, plates: Vec<PlateAnnotation>) -> Result<(Scene, FeatureTensor)> {
    let image = Image::from_tensor(&load_tensor(image_path(dir, id))?)?;
    let (h, w) = (image.height(), image.width());
    let seg_file = seg_path(dir, id);
    let raw = fs::read(&seg_file).map_err(|e| Error::io(&seg_file, e))?;
    let (sw, sh, seg) = parse_pgm(&raw)?;
    let disp = load_tensor(disp_path(dir, id))?;
    if (sh, sw) != (h, w) || (disp.height(), disp.width(), disp.channels()) != (h, w, 1) {
        return Err(Error::Format(format!("label maps of {id} do not match its image")));
    }
    let labels = TaskLabels::new(h, w, classes, seg, disp.into_data())?;
    for p in &plates {
        p.validate(w as u32, h as u32)?;
    }
    let tensor = load_tensor(tensor_path(dir, id))?;
    Ok((
        Scene {
            id: id.to_string(),
            image,
            labels,
            plates,
        },
        tensor,
    ))
}

/// Loads every scene listed in the index together with its stored features.
pub fn load_corpus(dir: &Path) -> Result<(CorpusIndex, HarnessCorpus)> {
    let index = read_index(dir)?;
    let mut plates = load_annotations(dir.join(ANNOTATIONS_FILE))?;
    let loaded = index
        .scenes
        .par_iter()
        .map(|id| {
            let mine = plates.iter().filter(|p| &p.image_id == id).cloned().collect();
            load_scene(dir, id, index.spec.regions, mine)
        })
        .collect::<Result<Vec<_>>>()?;
    plates.retain(|p| !index.scenes.contains(&p.image_id));
    if let Some(p) = plates.first() {
        return Err(Error::Format(format!("annotation for unknown scene {:?}", p.image_id)));
    }
    let (scenes, tensors) = loaded.into_iter().unzip();
    Ok((index, HarnessCorpus::with_tensors(scenes, tensors)?))
}

/// Every input file of the corpus, in a fixed order.
pub fn corpus_files(dir: &Path, index: &CorpusIndex) -> Vec<PathBuf> {
    let mut files = vec![dir.join(INDEX_FILE), dir.join(ANNOTATIONS_FILE)];
    for id in &index.scenes {
        files.extend(scene_files(dir, id));
    }
    files
}
