use super::SuperpixelError;
use crate::tensor_io::Tensor3;

// sRGB (D65) -> XYZ
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

// reference white is the image of sRGB (1, 1, 1) so white maps to a = b = 0
const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

fn linearize(c: u8) -> f64 {
    let c = c as f64 / 255.0;
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

/// One sRGB pixel to CIELAB.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(linearize);
    let mut f = [0.0; 3];
    for (k, row) in RGB_TO_XYZ.iter().enumerate() {
        let xyz = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
        f[k] = lab_f(xyz / WHITE[k]);
    }
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// Converts an 8-bit RGB image to a float32 CIELAB image of the same size.
pub fn rgb_to_lab(rgb: &Tensor3) -> Result<Tensor3, SuperpixelError> {
    if rgb.channels() != 3 {
        return Err(SuperpixelError::WrongChannelCount(rgb.channels()));
    }
    let px = rgb.as_u8()?;
    let mut out = Vec::with_capacity(px.len());
    for c in px.chunks_exact(3) {
        let lab = srgb_to_lab([c[0], c[1], c[2]]);
        out.extend(lab.iter().map(|&v| v as f32));
    }
    Ok(Tensor3::from_f32(rgb.height(), rgb.width(), 3, out)?)
}
