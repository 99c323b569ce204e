use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Side length of the square scene grid.
pub const GRID: usize = 16;
/// Number of non-background colors; grid values run `0..=NUM_COLORS`.
pub const NUM_COLORS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeKind {
    #[serde(rename = "rect-solid")]
    RectSolid,
    /// Hollow rectangle; the only kind with an interior.
    #[serde(rename = "rect")]
    Rect,
    #[serde(rename = "Lshape")]
    LShape,
    #[serde(rename = "line")]
    Line,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::RectSolid,
        ShapeKind::Rect,
        ShapeKind::LShape,
        ShapeKind::Line,
    ];
}

/// Pairwise relation label. Discriminants are stable and used as class ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    #[serde(rename = "none")]
    None = 0,
    #[serde(rename = "same-shape")]
    SameShape = 1,
    #[serde(rename = "same-color")]
    SameColor = 2,
    #[serde(rename = "inside")]
    Inside = 3,
}

impl RelationType {
    pub const ALL: [RelationType; 4] = [
        RelationType::None,
        RelationType::SameShape,
        RelationType::SameColor,
        RelationType::Inside,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::None => "none",
            RelationType::SameShape => "same-shape",
            RelationType::SameColor => "same-color",
            RelationType::Inside => "inside",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationType::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown relation {s:?}"))
    }
}

/// Set of relations that hold between two objects at once.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct RelationSet(u8);

impl RelationSet {
    pub const EMPTY: RelationSet = RelationSet(0);

    pub fn with(self, r: RelationType) -> Self {
        match r {
            RelationType::None => self,
            r => RelationSet(self.0 | 1 << r.index()),
        }
    }

    pub fn contains(self, r: RelationType) -> bool {
        r != RelationType::None && self.0 & (1 << r.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Highest-precedence member: Inside > SameColor > SameShape > None.
    pub fn label(self) -> RelationType {
        [
            RelationType::Inside,
            RelationType::SameColor,
            RelationType::SameShape,
        ]
        .into_iter()
        .find(|&r| self.contains(r))
        .unwrap_or(RelationType::None)
    }
}

/// Axis-aligned bounding box in grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl BBox {
    pub fn bottom(&self) -> usize {
        self.row + self.height
    }

    pub fn right(&self) -> usize {
        self.col + self.width
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.row < other.bottom()
            && other.row < self.bottom()
            && self.col < other.right()
            && other.col < self.right()
    }

    /// Whether `self` fits inside the cells strictly enclosed by a one-cell
    /// frame around `outer`.
    pub fn within_interior_of(&self, outer: &BBox) -> bool {
        outer.height >= 3
            && outer.width >= 3
            && self.row > outer.row
            && self.col > outer.col
            && self.bottom() < outer.bottom()
            && self.right() < outer.right()
    }
}

/// Occupancy of a 16×16 grid, one bit per cell.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Mask([u16; GRID]);

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in 0..GRID {
            let line: String = (0..GRID)
                .map(|c| if self.get(row, c) { '#' } else { '.' })
                .collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl Mask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0[row] >> col & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.0[row] |= 1 << col;
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&r| r == 0)
    }

    pub fn overlaps(&self, other: &Mask) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a & b != 0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..GRID).flat_map(move |r| (0..GRID).filter(move |&c| self.get(r, c)).map(move |c| (r, c)))
    }

    /// Tight bounding box; `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let rows: Vec<usize> = (0..GRID).filter(|&r| self.0[r] != 0).collect();
        let (&top, &bottom) = (rows.first()?, rows.last()?);
        let union = self.0.iter().fold(0u16, |acc, &r| acc | r);
        let left = union.trailing_zeros() as usize;
        let right = 15 - union.leading_zeros() as usize;
        Some(BBox {
            row: top,
            col: left,
            height: bottom - top + 1,
            width: right - left + 1,
        })
    }

    pub fn from_rows(rows: &[[u8; GRID]; GRID]) -> Self {
        let mut m = Mask::default();
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0 {
                    m.set(r, c);
                }
            }
        }
        m
    }

    pub fn to_rows(&self) -> [[u8; GRID]; GRID] {
        let mut out = [[0u8; GRID]; GRID];
        for (r, c) in self.cells() {
            out[r][c] = 1;
        }
        out
    }

    /// Remaps every set cell through `f`.
    pub fn map_cells(&self, f: impl Fn(usize, usize) -> (usize, usize)) -> Mask {
        let mut m = Mask::default();
        for (r, c) in self.cells() {
            let (nr, nc) = f(r, c);
            m.set(nr, nc);
        }
        m
    }
}

/// Color grid; 0 is background.
pub type Grid = [[u8; GRID]; GRID];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneObject {
    pub shape: ShapeKind,
    /// Color index in `1..=9`.
    pub color: u8,
    pub mask: Mask,
    pub bbox: BBox,
    /// Part of the task's relational subgraph, as opposed to a distractor.
    pub is_core: bool,
}

/// Labeled pair `(k, l)` with `k < l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub k: usize,
    pub l: usize,
    pub relation: RelationType,
}

impl Edge {
    pub fn new(a: usize, b: usize, relation: RelationType) -> Self {
        Edge {
            k: a.min(b),
            l: a.max(b),
            relation,
        }
    }
}

/// One scene: a grid, its objects and the hidden ground-truth edges over
/// core objects.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub grid: Grid,
    pub objects: Vec<SceneObject>,
    pub task_id: usize,
    pub obs_id: usize,
    /// Non-`None` relations among core objects, sorted.
    pub edges: Vec<Edge>,
}

impl Observation {
    pub fn masks(&self) -> Vec<Mask> {
        self.objects.iter().map(|o| o.mask).collect()
    }

    pub fn core_indices(&self) -> Vec<usize> {
        (0..self.objects.len()).filter(|&i| self.objects[i].is_core).collect()
    }

    /// Ground-truth label of a core pair, `None` for unlabeled pairs.
    pub fn label(&self, a: usize, b: usize) -> Option<RelationType> {
        if !(self.objects[a].is_core && self.objects[b].is_core) {
            return None;
        }
        let (k, l) = (a.min(b), a.max(b));
        Some(
            self.edges
                .iter()
                .find(|e| e.k == k && e.l == l)
                .map_or(RelationType::None, |e| e.relation),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_set_precedence() {
        let s = RelationSet::EMPTY
            .with(RelationType::SameShape)
            .with(RelationType::SameColor);
        assert_eq!(s.label(), RelationType::SameColor);
        assert_eq!(s.with(RelationType::Inside).label(), RelationType::Inside);
        assert_eq!(RelationSet::EMPTY.label(), RelationType::None);
        assert!(RelationSet::EMPTY.with(RelationType::None).is_empty());
    }

    #[test]
    fn mask_bbox_and_rows() {
        let mut m = Mask::default();
        m.set(2, 3);
        m.set(4, 15);
        assert_eq!(
            m.bbox(),
            Some(BBox {
                row: 2,
                col: 3,
                height: 3,
                width: 13
            })
        );
        assert_eq!(Mask::from_rows(&m.to_rows()), m);
        assert_eq!(Mask::default().bbox(), None);
        assert_eq!(m.count(), 2);
    }

    #[test]
    fn interior_containment_is_strict() {
        let outer = BBox { row: 0, col: 0, height: 5, width: 5 };
        let inner = BBox { row: 1, col: 1, height: 3, width: 3 };
        assert!(inner.within_interior_of(&outer));
        let touching = BBox { row: 0, col: 1, height: 3, width: 3 };
        assert!(!touching.within_interior_of(&outer));
        assert!(!outer.within_interior_of(&outer));
    }

    #[test]
    fn relation_names_round_trip() {
        for r in RelationType::ALL {
            assert_eq!(r.as_str().parse::<RelationType>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{r}\""));
        }
        assert_eq!(serde_json::to_string(&ShapeKind::LShape).unwrap(), "\"Lshape\"");
    }
}
