use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::LabeledMask;

/// Pixels within this Chebyshev distance of a differently labeled pixel are
/// eligible for corruption.
pub const BOUNDARY_RADIUS: usize = 2;

fn window(mask: &LabeledMask, x: usize, y: usize) -> impl Iterator<Item = (usize, usize)> {
    let r = BOUNDARY_RADIUS;
    let (w, h) = (mask.width(), mask.height());
    let ys = y.saturating_sub(r)..(y + r + 1).min(h);
    ys.flat_map(move |yy| (x.saturating_sub(r)..(x + r + 1).min(w)).map(move |xx| (xx, yy)))
}

/// Whether a pixel lies within [`BOUNDARY_RADIUS`] of a label boundary.
pub fn is_boundary_pixel(mask: &LabeledMask, x: usize, y: usize) -> bool {
    let own = mask.at(x, y).0;
    window(mask, x, y).any(|(xx, yy)| mask.at(xx, yy).0 != own)
}

/// Resamples boundary pixels to a neighboring region's label.
///
/// Every eligible pixel, in row-major order, draws one uniform and one
/// choice index whatever the rate; it flips when the uniform is below
/// `rate`. The flipped set therefore grows monotonically with `rate` for a
/// fixed seed. A flipped pixel takes one of the distinct other semantic
/// labels in its window (ascending order, picked by the choice index) and
/// the instance id of the first window pixel carrying that label.
pub fn corrupt_mask(mask: &LabeledMask, rate: f64, seed: u64) -> Result<LabeledMask> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "corruption rate {rate} outside [0, 1]"
        )));
    }
    let mut out = mask.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<i32> = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if !is_boundary_pixel(mask, x, y) {
                continue;
            }
            let u: f64 = rng.random();
            let pick: u64 = rng.random();
            if u >= rate {
                continue;
            }
            let own = mask.at(x, y).0;
            labels.clear();
            labels.extend(
                window(mask, x, y)
                    .map(|(xx, yy)| mask.at(xx, yy).0)
                    .filter(|&s| s != own),
            );
            labels.sort_unstable();
            labels.dedup();
            let target = labels[(pick % labels.len() as u64) as usize];
            let inst = window(mask, x, y)
                .map(|(xx, yy)| mask.at(xx, yy))
                .find(|&(s, _)| s == target)
                .map(|(_, i)| i)
                .unwrap_or(-1);
            out.set(x, y, target, inst);
        }
    }
    Ok(out)
}
