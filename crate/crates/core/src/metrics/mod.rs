//! Image quality metrics: full-reference PSNR, SSIM and CIEDE2000, and the
//! no-reference underwater scores UCIQE and UIQM.

pub mod color;
pub mod fidelity;
pub mod uciqe;
pub mod uiqm;

pub use color::{ciede2000, ciede2000_image, srgb_to_lab, Lab};
pub use fidelity::{psnr, ssim, PSNR_CAP};
pub use uciqe::{uciqe, UciqeComponents};
pub use uiqm::{uiqm, uiqm_components, UiqmComponents};
