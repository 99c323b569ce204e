//! Relation-preserving scene augmentations.

use rand::seq::SliceRandom;
use rand::Rng;

use super::types::{Grid, Mask, Observation, GRID, NUM_COLORS};

/// Probability that a drawn augmentation is applied at all.
pub const AUGMENT_PROBABILITY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Augmentation {
    FlipHorizontal,
    FlipVertical,
    Rotate90,
    Rotate180,
    Rotate270,
    /// Doubles every shape (and the gaps between them) when the scene fits.
    Upscale2,
    /// `perm[c]` is the new color of color `c`; `perm[0] == 0`.
    Recolor([u8; NUM_COLORS + 1]),
}

impl Augmentation {
    /// Draws one augmentation uniformly, or `None` (identity) with
    /// probability `1 - AUGMENT_PROBABILITY`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Option<Self> {
        if !rng.random_bool(AUGMENT_PROBABILITY) {
            return None;
        }
        Some(match rng.random_range(0..7) {
            0 => Augmentation::FlipHorizontal,
            1 => Augmentation::FlipVertical,
            2 => Augmentation::Rotate90,
            3 => Augmentation::Rotate180,
            4 => Augmentation::Rotate270,
            5 => Augmentation::Upscale2,
            _ => {
                let mut colors: Vec<u8> = (1..=NUM_COLORS as u8).collect();
                colors.shuffle(rng);
                let mut perm = [0u8; NUM_COLORS + 1];
                perm[1..].copy_from_slice(&colors);
                Augmentation::Recolor(perm)
            }
        })
    }

    /// Transforms a grid and its object masks consistently. Returns the
    /// inputs unchanged when an upscale would not fit.
    pub fn apply(&self, grid: &Grid, masks: &[Mask]) -> (Grid, Vec<Mask>) {
        let last = GRID - 1;
        let geometric: Option<fn(usize, usize) -> (usize, usize)> = match self {
            Augmentation::FlipHorizontal => Some(|r, c| (r, GRID - 1 - c)),
            Augmentation::FlipVertical => Some(|r, c| (GRID - 1 - r, c)),
            Augmentation::Rotate90 => Some(|r, c| (c, GRID - 1 - r)),
            Augmentation::Rotate180 => Some(|r, c| (GRID - 1 - r, GRID - 1 - c)),
            Augmentation::Rotate270 => Some(|r, c| (GRID - 1 - c, r)),
            _ => None,
        };
        if let Some(f) = geometric {
            let mut out = [[0u8; GRID]; GRID];
            for r in 0..=last {
                for c in 0..=last {
                    let (nr, nc) = f(r, c);
                    out[nr][nc] = grid[r][c];
                }
            }
            return (out, masks.iter().map(|m| m.map_cells(f)).collect());
        }
        match self {
            Augmentation::Recolor(perm) => {
                let mut out = *grid;
                out.iter_mut()
                    .flatten()
                    .for_each(|v| *v = perm[*v as usize]);
                (out, masks.to_vec())
            }
            _ => upscale(grid, masks).unwrap_or_else(|| (*grid, masks.to_vec())),
        }
    }
}

fn upscale(grid: &Grid, masks: &[Mask]) -> Option<(Grid, Vec<Mask>)> {
    let mut union = Mask::default();
    for m in masks {
        for (r, c) in m.cells() {
            union.set(r, c);
        }
    }
    let bbox = union.bbox()?;
    if 2 * bbox.height > GRID || 2 * bbox.width > GRID {
        return None;
    }
    let row0 = bbox.row.min(GRID - 2 * bbox.height);
    let col0 = bbox.col.min(GRID - 2 * bbox.width);
    let scale = |m: &Mask| {
        let mut out = Mask::default();
        for (r, c) in m.cells() {
            let (nr, nc) = (row0 + 2 * (r - bbox.row), col0 + 2 * (c - bbox.col));
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                out.set(nr + dr, nc + dc);
            }
        }
        out
    };
    let new_masks: Vec<Mask> = masks.iter().map(scale).collect();
    let mut out = [[0u8; GRID]; GRID];
    for (old, new) in masks.iter().zip(&new_masks) {
        let Some((r, c)) = old.cells().next() else { continue };
        let color = grid[r][c];
        for (nr, nc) in new.cells() {
            out[nr][nc] = color;
        }
    }
    Some((out, new_masks))
}

/// Applies `aug` to a full observation, keeping object metadata in sync.
pub fn apply_to_observation(o: &Observation, aug: &Augmentation) -> Observation {
    let (grid, masks) = aug.apply(&o.grid, &o.masks());
    let mut out = o.clone();
    out.grid = grid;
    for (obj, mask) in out.objects.iter_mut().zip(masks) {
        obj.bbox = mask.bbox().expect("augmentation keeps masks nonempty");
        obj.mask = mask;
        if let Augmentation::Recolor(perm) = aug {
            obj.color = perm[obj.color as usize];
        }
    }
    out
}

/// Randomly augments an observation. Relation labels of every object pair are
/// unchanged.
pub fn augment_observation<R: Rng + ?Sized>(o: &Observation, rng: &mut R) -> Observation {
    match Augmentation::sample(rng) {
        Some(aug) => apply_to_observation(o, &aug),
        None => o.clone(),
    }
}
