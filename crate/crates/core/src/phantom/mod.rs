//! Synthetic phantoms: bone meshes, tracked sweeps and calibration recordings with exact ground truth.

pub mod calib;
pub mod generate;
pub mod mesh_gen;
pub mod perturb;
pub mod scene;

pub use calib::{default_calibration_recording, specimen_registration, synthesize_calibration, CalibrationScenario};
pub use generate::{generate_phantom, Phantom, PhantomConfig};
pub use mesh_gen::{make_bone_mesh, MeshKind};
pub use perturb::{apply_perturbations, perturb_tracking};
pub use scene::{
    synthesize_sweep, FrameTruth, IntensityParams, NoiseParams, SweepGroundTruth, SweepLayout, SyntheticScene,
};
