//! One-level 2-D orthonormal Haar transform, its inverse, and the
//! low-frequency reconstruction operator.
//!
//! Each non-overlapping 2×2 block `[a b; c d]` of a channel maps to
//!
//! ```text
//! ll = (a+b+c+d)/2    hl = (a+b-c-d)/2
//! lh = (a-b+c-d)/2    hh = (a-b-c+d)/2
//! ```
//!
//! Subband names put the vertical filter first: `lh` is vertically low-pass,
//! horizontally high-pass. The block matrix is symmetric and orthogonal, so
//! synthesis is the same stencil and the transform preserves energy exactly
//! up to rounding. Channels transform independently.

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// The four subbands of a one-level decomposition, each (H/2)×(W/2)×C.
#[derive(Debug, Clone)]
pub struct SubbandSet {
    pub ll: ImageTensor,
    pub lh: ImageTensor,
    pub hl: ImageTensor,
    pub hh: ImageTensor,
    pub source_height: usize,
    pub source_width: usize,
}

impl SubbandSet {
    /// Assembles a subband set, checking that all four bands agree in shape
    /// and halve the source dimensions.
    pub fn new(
        ll: ImageTensor,
        lh: ImageTensor,
        hl: ImageTensor,
        hh: ImageTensor,
        source_height: usize,
        source_width: usize,
    ) -> Result<Self> {
        for (name, band) in [("lh", &lh), ("hl", &hl), ("hh", &hh)] {
            if !ll.same_shape(band) {
                return Err(Error::Shape(format!("subband {name} does not match ll")));
            }
        }
        if ll.height() * 2 != source_height || ll.width() * 2 != source_width {
            return Err(Error::Shape(format!(
                "subbands {}x{} inconsistent with source {}x{}",
                ll.height(),
                ll.width(),
                source_height,
                source_width
            )));
        }
        Ok(SubbandSet { ll, lh, hl, hh, source_height, source_width })
    }
}

/// One-level orthonormal Haar analysis.
pub fn dwt_haar(x: &ImageTensor) -> Result<SubbandSet> {
    x.require_even_dims()?;
    let (h, w, c) = x.shape();
    let (hh2, wh2) = (h / 2, w / 2);
    let n = hh2 * wh2 * c;
    let mut ll = vec![0.0; n];
    let mut lh = vec![0.0; n];
    let mut hl = vec![0.0; n];
    let mut hh = vec![0.0; n];
    for by in 0..hh2 {
        for bx in 0..wh2 {
            for ch in 0..c {
                let a = x.get(2 * by, 2 * bx, ch);
                let b = x.get(2 * by, 2 * bx + 1, ch);
                let cc = x.get(2 * by + 1, 2 * bx, ch);
                let d = x.get(2 * by + 1, 2 * bx + 1, ch);
                let i = (by * wh2 + bx) * c + ch;
                ll[i] = (a + b + cc + d) / 2.0;
                hl[i] = (a + b - cc - d) / 2.0;
                lh[i] = (a - b + cc - d) / 2.0;
                hh[i] = (a - b - cc + d) / 2.0;
            }
        }
    }
    let range = x.pixel_range();
    let band = |data: Vec<f64>| ImageTensor::new(hh2, wh2, c, data, range);
    SubbandSet::new(band(ll)?, band(lh)?, band(hl)?, band(hh)?, h, w)
}

/// Exact inverse of [`dwt_haar`] (synthesis = transpose of analysis).
pub fn idwt_haar(s: &SubbandSet) -> Result<ImageTensor> {
    let (hh2, wh2, c) = s.ll.shape();
    if s.source_height != hh2 * 2 || s.source_width != wh2 * 2 {
        return Err(Error::Shape("subband set inconsistent with source dims".into()));
    }
    let (h, w) = (s.source_height, s.source_width);
    let mut out = vec![0.0; h * w * c];
    for by in 0..hh2 {
        for bx in 0..wh2 {
            for ch in 0..c {
                let i = (by * wh2 + bx) * c + ch;
                let ll = s.ll.data()[i];
                let hl = s.hl.data()[i];
                let lh = s.lh.data()[i];
                let hh = s.hh.data()[i];
                let a = (ll + hl + lh + hh) / 2.0;
                let b = (ll + hl - lh - hh) / 2.0;
                let cc = (ll - hl + lh - hh) / 2.0;
                let d = (ll - hl - lh + hh) / 2.0;
                out[((2 * by) * w + 2 * bx) * c + ch] = a;
                out[((2 * by) * w + 2 * bx + 1) * c + ch] = b;
                out[((2 * by + 1) * w + 2 * bx) * c + ch] = cc;
                out[((2 * by + 1) * w + 2 * bx + 1) * c + ch] = d;
            }
        }
    }
    ImageTensor::new(h, w, c, out, s.ll.pixel_range())
}

/// Low-frequency reconstruction: inverse transform of the ll band alone.
/// An orthogonal projection onto the low-frequency subspace.
pub fn low_freq_reconstruct(x: &ImageTensor) -> Result<ImageTensor> {
    let mut s = dwt_haar(x)?;
    let zeros = s.ll.scale(0.0);
    s.lh = zeros.clone();
    s.hl = zeros.clone();
    s.hh = zeros;
    idwt_haar(&s)
}
