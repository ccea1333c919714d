//! Transparent stand-in for a multi-task edge/cloud network: synthetic
//! scenes, an exactly invertible feature encoder, linear task heads and a
//! glyph recognizer.

pub mod eval;
pub mod haar;
pub mod heads;
pub mod recognizer;
pub mod scene;

pub use eval::{HarnessCorpus, TaskScores};
pub use haar::HarnessModel;
pub use heads::{disp_head, seg_head};
pub use recognizer::recognize_glyphs;
pub use scene::{generate_corpus, generate_scene, Scene, SceneSpec};
