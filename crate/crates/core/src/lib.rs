//! Volumetric two-point Dixon fat-water separation toolkit.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`volume`]: the 3D intensity container, the DVOL binary format,
//!   cropping, tile planning/reassembly and joint channel normalization.
//! - [`autodiff`]: reverse-mode automatic differentiation over dense
//!   5-D tensors with the 3D convolution stack needed by the cGAN,
//!   plus the Adam optimizer and checkpoint serialization.
//! - [`sim`]: synthetic Dixon phantom generation — ground-truth fat/water
//!   anatomy, the two-point signal model with field inhomogeneity and
//!   noise, and induced fat-water swaps.
//! - [`model`]: the 3D U-Net generator, the PatchGAN discriminator and
//!   the adversarial / L1 / Dixon training objectives.
//! - [`train`]: adversarial training loop, batch sampling and the
//!   cross-validation driver.
//! - [`metrics`]: tiled full-volume inference, SSIM/PSNR, swap label
//!   maps and false-positive cluster statistics.

pub mod autodiff;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod train;
pub mod util;
pub mod volume;
