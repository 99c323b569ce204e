use tapegrad::{Scalar, Tensor};

use super::types::{Grid, Mask, GRID, NUM_COLORS};
use super::SceneError;

/// Floats per object slab (`9 × 16 × 16`).
pub const SLAB_LEN: usize = NUM_COLORS * GRID * GRID;

/// Per-object one-hot slabs laid out `[max_objects, 9, 16, 16]`
/// (channel-first, so slab `k` feeds the object encoder directly).
#[derive(Clone, Debug)]
pub struct RenderedInput<T> {
    pub slabs: Tensor<T>,
    /// `present[k]` is false for padding slabs beyond the actual object count.
    pub present: Vec<bool>,
}

/// Writes the one-hot slab of one object: channel `color - 1` is 1 on the
/// object's cells.
pub fn write_slab<T: Scalar>(grid: &Grid, mask: &Mask, out: &mut [T]) {
    debug_assert_eq!(out.len(), SLAB_LEN);
    for (r, c) in mask.cells() {
        let color = grid[r][c] as usize;
        debug_assert!(color >= 1, "masked cell without color");
        out[((color - 1) * GRID + r) * GRID + c] = T::one();
    }
}

/// Renders the objects of one scene, padding to `max_objects`.
pub fn render_input<T: Scalar>(
    grid: &Grid,
    masks: &[Mask],
    max_objects: usize,
) -> Result<RenderedInput<T>, SceneError> {
    if masks.len() > max_objects {
        return Err(SceneError::TooManyObjects {
            count: masks.len(),
            max: max_objects,
        });
    }
    let mut data = vec![T::zero(); max_objects * SLAB_LEN];
    for (k, mask) in masks.iter().enumerate() {
        write_slab(grid, mask, &mut data[k * SLAB_LEN..(k + 1) * SLAB_LEN]);
    }
    Ok(RenderedInput {
        slabs: Tensor::new(&[max_objects, NUM_COLORS, GRID, GRID], data)
            .expect("length matches shape"),
        present: (0..max_objects).map(|k| k < masks.len()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_is_all_zero() {
        let grid = [[0u8; GRID]; GRID];
        let r = render_input::<f32>(&grid, &[], 3).unwrap();
        assert!(r.slabs.data().iter().all(|&v| v == 0.0));
        assert_eq!(r.present, vec![false; 3]);
    }

    #[test]
    fn single_object_lands_in_its_color_channel() {
        let mut grid = [[0u8; GRID]; GRID];
        let mut mask = Mask::default();
        for c in 2..5 {
            grid[7][c] = 4;
            mask.set(7, c);
        }
        let r = render_input::<f64>(&grid, &[mask], 2).unwrap();
        let ones: Vec<usize> = r
            .slabs
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones.len(), 3);
        for i in ones {
            assert!(i < SLAB_LEN, "slab 0 only");
            assert_eq!(i / (GRID * GRID), 3, "channel color-1");
        }
        assert_eq!(r.present, vec![true, false]);
    }

    #[test]
    fn too_many_objects() {
        let grid = [[0u8; GRID]; GRID];
        let m = Mask::default();
        assert!(matches!(
            render_input::<f32>(&grid, &[m, m, m], 2),
            Err(SceneError::TooManyObjects { count: 3, max: 2 })
        ));
    }
}
