//! sRGB → CIELab (D65) and the CIEDE2000 color difference.
//!
//! sRGB components in `[0, 1]` are linearized with the standard transfer
//! curve (`c/12.92` below 0.04045, `((c+0.055)/1.055)^2.4` above), mapped to
//! XYZ with the sRGB/D65 matrix, and normalized by the D65 white point
//! `(0.95047, 1.0, 1.08883)`.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

pub const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

pub fn srgb_to_lab(rgb: [f64; 3]) -> Lab {
    let lin = rgb.map(srgb_to_linear);
    let xyz = SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Lab value of every pixel of a `1×3×H×W` image, in raster order.
pub fn image_to_lab(image: &Tensor) -> Result<Vec<Lab>> {
    image.ensure_rgb("lab conversion")?;
    let (r, g, b) = (image.plane(0, 0), image.plane(0, 1), image.plane(0, 2));
    Ok(r.iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| srgb_to_lab([r as f64, g as f64, b as f64]))
        .collect())
}

/// CIEDE2000 with `kL = kC = kH = 1`.
pub fn ciede2000(lab1: Lab, lab2: Lab) -> f64 {
    let pow25_7 = 25f64.powi(7);
    let c_bar = (lab1.chroma() + lab2.chroma()) / 2.0;
    let g = 0.5 * (1.0 - (c_bar.powi(7) / (c_bar.powi(7) + pow25_7)).sqrt());

    let a1 = (1.0 + g) * lab1.a;
    let a2 = (1.0 + g) * lab2.a;
    let c1 = a1.hypot(lab1.b);
    let c2 = a2.hypot(lab2.b);
    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            b.atan2(a).to_degrees().rem_euclid(360.0)
        }
    };
    let h1 = hue(lab1.b, a1);
    let h2 = hue(lab2.b, a2);

    let dl = lab2.l - lab1.l;
    let dc = c2 - c1;
    let dh_angle = if c1 * c2 == 0.0 {
        0.0
    } else {
        let d = h2 - h1;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh = 2.0 * (c1 * c2).sqrt() * (dh_angle / 2.0).to_radians().sin();

    let l_bar = (lab1.l + lab2.l) / 2.0;
    let c_bar_p = (c1 + c2) / 2.0;
    let h_bar = if c1 * c2 == 0.0 {
        h1 + h2
    } else if (h1 - h2).abs() <= 180.0 {
        (h1 + h2) / 2.0
    } else if h1 + h2 < 360.0 {
        (h1 + h2 + 360.0) / 2.0
    } else {
        (h1 + h2 - 360.0) / 2.0
    };

    let cos_deg = |d: f64| d.to_radians().cos();
    let t = 1.0 - 0.17 * cos_deg(h_bar - 30.0) + 0.24 * cos_deg(2.0 * h_bar) + 0.32 * cos_deg(3.0 * h_bar + 6.0)
        - 0.20 * cos_deg(4.0 * h_bar - 63.0);
    let d_theta = 30.0 * (-((h_bar - 275.0) / 25.0).powi(2)).exp();
    let rc = 2.0 * (c_bar_p.powi(7) / (c_bar_p.powi(7) + pow25_7)).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let sl = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let sc = 1.0 + 0.045 * c_bar_p;
    let sh = 1.0 + 0.015 * c_bar_p * t;
    let rt = -(2.0 * d_theta).to_radians().sin() * rc;

    let (tl, tc, th) = (dl / sl, dc / sc, dh / sh);
    (tl * tl + tc * tc + th * th + rt * tc * th).max(0.0).sqrt()
}

/// Mean per-pixel CIEDE2000 between two sRGB images.
pub fn ciede2000_image(reference: &Tensor, test: &Tensor) -> Result<f64> {
    reference.ensure_same_shape(test, "ciede2000")?;
    let a = image_to_lab(reference)?;
    let b = image_to_lab(test)?;
    Ok(a.iter().zip(&b).map(|(&p, &q)| ciede2000(p, q)).sum::<f64>() / a.len() as f64)
}
