//! Relation oracle and constrained scene generation.

use rand::seq::SliceRandom;
use rand::Rng;

use super::task::TaskSpec;
use super::types::{
    BBox, Edge, Grid, Mask, Observation, RelationSet, RelationType, SceneObject, ShapeKind, GRID,
    NUM_COLORS,
};
use super::SceneError;

/// Rejection-sampling attempts before giving up on a spec.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

const PLACEMENT_TRIES: usize = 200;

fn contains(container: &SceneObject, inner: &SceneObject) -> bool {
    container.shape == ShapeKind::Rect && inner.bbox.within_interior_of(&container.bbox)
}

/// Every relation that holds between `a` and `b`.
pub fn relations_between(a: &SceneObject, b: &SceneObject) -> RelationSet {
    let mut set = RelationSet::EMPTY;
    if contains(a, b) || contains(b, a) {
        set = set.with(RelationType::Inside);
    }
    if a.color == b.color {
        set = set.with(RelationType::SameColor);
    }
    if a.shape == b.shape {
        set = set.with(RelationType::SameShape);
    }
    set
}

/// Ground-truth relation between two objects of one scene, with precedence
/// Inside > SameColor > SameShape.
pub fn relation_oracle(a: &SceneObject, b: &SceneObject) -> RelationType {
    relations_between(a, b).label()
}

/// Oracle labels for every pair of the given object indices, as sorted edges.
pub fn oracle_edges(objects: &[SceneObject], indices: &[usize]) -> Vec<Edge> {
    let mut edges = Vec::new();
    for (i, &a) in indices.iter().enumerate() {
        for &b in &indices[i + 1..] {
            let r = relation_oracle(&objects[a], &objects[b]);
            if r != RelationType::None {
                edges.push(Edge::new(a, b, r));
            }
        }
    }
    edges.sort();
    edges
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let p = self.0[x];
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.0[x] = root;
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Dense class ids in first-seen order.
    fn classes(&mut self) -> Vec<usize> {
        let n = self.0.len();
        let mut ids = vec![usize::MAX; n];
        let mut out = Vec::with_capacity(n);
        let mut next = 0;
        for x in 0..n {
            let r = self.find(x);
            if ids[r] == usize::MAX {
                ids[r] = next;
                next += 1;
            }
            out.push(ids[r]);
        }
        out
    }
}

/// Core-object structure implied by a spec once every `inside` edge has been
/// given a direction (`parent[inner] = Some(container)`).
struct Implied {
    parent: Vec<Option<usize>>,
    color_class: Vec<usize>,
    shape_class: Vec<usize>,
    /// Shape class forced to hollow rectangles (containers), if any.
    rect_class: Option<usize>,
}

impl Implied {
    fn new(spec: &TaskSpec, parent: Vec<Option<usize>>) -> Option<Self> {
        let n = spec.n_core;
        let mut colors = UnionFind::new(n);
        let mut shapes = UnionFind::new(n);
        for &((k, l), r) in &spec.relations {
            match r {
                RelationType::SameColor => colors.union(k, l),
                RelationType::SameShape => shapes.union(k, l),
                _ => {}
            }
        }
        let containers: Vec<usize> = parent.iter().flatten().copied().collect();
        for w in containers.windows(2) {
            shapes.union(w[0], w[1]);
        }
        // Containment must be a forest.
        for start in 0..n {
            let mut cur = start;
            for _ in 0..=n {
                match parent[cur] {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            if parent[cur].is_some() {
                return None;
            }
        }
        let shape_class = shapes.classes();
        let rect_class = containers.first().map(|&c| shape_class[c]);
        Some(Implied {
            parent,
            color_class: colors.classes(),
            shape_class,
            rect_class,
        })
    }

    fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut cur = self.parent[b];
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.parent[p];
        }
        false
    }

    fn expected(&self, a: usize, b: usize) -> RelationSet {
        let mut set = RelationSet::EMPTY;
        if self.is_ancestor(a, b) || self.is_ancestor(b, a) {
            set = set.with(RelationType::Inside);
        }
        if self.color_class[a] == self.color_class[b] {
            set = set.with(RelationType::SameColor);
        }
        if self.shape_class[a] == self.shape_class[b] {
            set = set.with(RelationType::SameShape);
        }
        set
    }
}

impl TaskSpec {
    /// Full ground-truth edge set implied by the listed relations, with each
    /// `inside` pair read as "first index contains second".
    ///
    /// Equality relations are transitive, so e.g. `(0,1)` and `(1,2)`
    /// same-color also make `(0,2)` same-color.
    pub fn closure(&self) -> Vec<Edge> {
        let mut parent = vec![None; self.n_core];
        for &((k, l), r) in &self.relations {
            if r == RelationType::Inside {
                parent[l] = Some(k);
            }
        }
        let Some(implied) = Implied::new(self, parent) else {
            return Vec::new();
        };
        let mut edges = Vec::new();
        for a in 0..self.n_core {
            for b in a + 1..self.n_core {
                let label = implied.expected(a, b).label();
                if label != RelationType::None {
                    edges.push(Edge::new(a, b, label));
                }
            }
        }
        edges
    }
}

/// Cells of a shape relative to its bounding box origin.
fn draw(kind: ShapeKind, height: usize, width: usize, corner: u8) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    match kind {
        ShapeKind::RectSolid | ShapeKind::Line => {
            for r in 0..height {
                for c in 0..width {
                    cells.push((r, c));
                }
            }
        }
        ShapeKind::Rect => {
            for r in 0..height {
                for c in 0..width {
                    if r == 0 || c == 0 || r + 1 == height || c + 1 == width {
                        cells.push((r, c));
                    }
                }
            }
        }
        ShapeKind::LShape => {
            // One full column and one full row meeting at the chosen corner.
            let col = if corner & 1 == 0 { 0 } else { width - 1 };
            let row = if corner & 2 == 0 { height - 1 } else { 0 };
            for r in 0..height {
                for c in 0..width {
                    if r == row || c == col {
                        cells.push((r, c));
                    }
                }
            }
        }
    }
    cells
}

#[derive(Clone, Copy)]
struct Footprint {
    kind: ShapeKind,
    height: usize,
    width: usize,
    corner: u8,
}

fn sample_footprint<R: Rng + ?Sized>(
    kind: ShapeKind,
    min_h: usize,
    min_w: usize,
    rng: &mut R,
) -> Option<Footprint> {
    let (height, width) = match kind {
        ShapeKind::RectSolid | ShapeKind::Rect => {
            let (lo_h, lo_w) = (min_h.max(3), min_w.max(3));
            if lo_h > 8 || lo_w > 8 {
                return None;
            }
            (rng.random_range(lo_h..=8), rng.random_range(lo_w..=8))
        }
        ShapeKind::LShape => (rng.random_range(2..=5), rng.random_range(2..=5)),
        ShapeKind::Line => {
            let len = rng.random_range(3..=8);
            if rng.random_bool(0.5) {
                (1, len)
            } else {
                (len, 1)
            }
        }
    };
    Some(Footprint {
        kind,
        height,
        width,
        corner: rng.random_range(0..4),
    })
}

struct Draft {
    footprint: Footprint,
    color: u8,
    is_core: bool,
    bbox: Option<BBox>,
}

/// Generates one observation whose core objects realize `spec` exactly.
///
/// Fails with [`SceneError::GenerationExhausted`] when no valid scene is found
/// within `max_attempts` rejection-sampling rounds.
pub fn generate_observation<R: Rng + ?Sized>(
    spec: &TaskSpec,
    n_distractors: usize,
    rng: &mut R,
) -> Result<Observation, SceneError> {
    generate_observation_with(spec, n_distractors, DEFAULT_MAX_ATTEMPTS, rng)
}

pub fn generate_observation_with<R: Rng + ?Sized>(
    spec: &TaskSpec,
    n_distractors: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<Observation, SceneError> {
    spec.validate()?;
    for _ in 0..max_attempts {
        if let Some(obs) = attempt(spec, n_distractors, rng) {
            return Ok(obs);
        }
    }
    Err(SceneError::GenerationExhausted {
        task_id: spec.task_id,
        attempts: max_attempts,
    })
}

fn attempt<R: Rng + ?Sized>(spec: &TaskSpec, n_distractors: usize, rng: &mut R) -> Option<Observation> {
    let n = spec.n_core;
    let mut parent = vec![None; n];
    for &((k, l), r) in &spec.relations {
        if r == RelationType::Inside {
            let (outer, inner) = if rng.random_bool(0.5) { (k, l) } else { (l, k) };
            if parent[inner].is_some() {
                return None;
            }
            parent[inner] = Some(outer);
        }
    }
    let implied = Implied::new(spec, parent)?;

    // Distinct colors per color class, distinct kinds per shape class.
    let n_color_classes = implied.color_class.iter().max().map_or(0, |m| m + 1);
    let mut palette: Vec<u8> = (1..=NUM_COLORS as u8).collect();
    palette.shuffle(rng);
    if n_color_classes > palette.len() {
        return None;
    }
    let n_shape_classes = implied.shape_class.iter().max().map_or(0, |m| m + 1);
    let mut kinds: Vec<ShapeKind> = ShapeKind::ALL
        .into_iter()
        .filter(|&k| implied.rect_class.is_none() || k != ShapeKind::Rect)
        .collect();
    kinds.shuffle(rng);
    let mut class_kind = Vec::with_capacity(n_shape_classes);
    let mut free = kinds.into_iter();
    for class in 0..n_shape_classes {
        if Some(class) == implied.rect_class {
            class_kind.push(ShapeKind::Rect);
        } else {
            class_kind.push(free.next()?);
        }
    }

    // Size innermost objects first so containers can wrap their contents.
    let depth = |mut i: usize| {
        let mut d = 0;
        while let Some(p) = implied.parent[i] {
            d += 1;
            i = p;
        }
        d
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(depth(i)));
    let mut footprints: Vec<Option<Footprint>> = vec![None; n];
    for &i in &order {
        let (mut min_h, mut min_w) = (0, 0);
        for child in (0..n).filter(|&c| implied.parent[c] == Some(i)) {
            let f = footprints[child]?;
            min_h = min_h.max(f.height + 2);
            min_w = min_w.max(f.width + 2);
        }
        let kind = class_kind[implied.shape_class[i]];
        footprints[i] = Some(sample_footprint(kind, min_h, min_w, rng)?);
    }

    let mut drafts: Vec<Draft> = (0..n)
        .map(|i| Draft {
            footprint: footprints[i].expect("every core object sized"),
            color: palette[implied.color_class[i]],
            is_core: true,
            bbox: None,
        })
        .collect();
    let mut parents = implied.parent.clone();
    for _ in 0..n_distractors {
        let kind = ShapeKind::ALL[rng.random_range(0..4)];
        drafts.push(Draft {
            footprint: sample_footprint(kind, 0, 0, rng)?,
            color: rng.random_range(1..=NUM_COLORS as u8),
            is_core: false,
            bbox: None,
        });
        parents.push(None);
    }

    // Top-level objects get pairwise disjoint boxes; contents go inside their
    // container's interior.
    let mut roots: Vec<usize> = (0..drafts.len()).filter(|&i| parents[i].is_none()).collect();
    roots.shuffle(rng);
    let mut placed: Vec<BBox> = Vec::new();
    let mut queue: Vec<usize> = Vec::new();
    for &i in &roots {
        let f = drafts[i].footprint;
        let bbox = place(f, (0, 0, GRID, GRID), &placed, rng)?;
        placed.push(bbox);
        drafts[i].bbox = Some(bbox);
        queue.push(i);
    }
    while let Some(outer) = queue.pop() {
        let children: Vec<usize> = (0..drafts.len()).filter(|&c| parents[c] == Some(outer)).collect();
        if children.is_empty() {
            continue;
        }
        let ob = drafts[outer].bbox.expect("placed before its contents");
        let region = (ob.row + 1, ob.col + 1, ob.height - 2, ob.width - 2);
        let mut siblings = Vec::new();
        for child in children {
            let bbox = place(drafts[child].footprint, region, &siblings, rng)?;
            siblings.push(bbox);
            drafts[child].bbox = Some(bbox);
            queue.push(child);
        }
    }

    let mut objects: Vec<SceneObject> = drafts
        .iter()
        .map(|d| {
            let bbox = d.bbox.expect("all objects placed");
            let f = d.footprint;
            let mut mask = Mask::default();
            for (r, c) in draw(f.kind, f.height, f.width, f.corner) {
                mask.set(bbox.row + r, bbox.col + c);
            }
            SceneObject {
                shape: f.kind,
                color: d.color,
                bbox: mask.bbox().expect("shapes are nonempty"),
                mask,
                is_core: d.is_core,
            }
        })
        .collect();

    // Reject scenes where any core pair carries an unlisted relation.
    for a in 0..n {
        for b in a + 1..n {
            if relations_between(&objects[a], &objects[b]) != implied.expected(a, b) {
                return None;
            }
        }
    }

    let mut perm: Vec<usize> = (0..objects.len()).collect();
    perm.shuffle(rng);
    // perm[new] = old
    let mut new_index = vec![0; objects.len()];
    for (new, &old) in perm.iter().enumerate() {
        new_index[old] = new;
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let label = implied.expected(a, b).label();
            if label != RelationType::None {
                edges.push(Edge::new(new_index[a], new_index[b], label));
            }
        }
    }
    edges.sort();
    let mut shuffled: Vec<Option<SceneObject>> = objects.drain(..).map(Some).collect();
    let objects: Vec<SceneObject> = perm.iter().map(|&old| shuffled[old].take().unwrap()).collect();

    let mut grid: Grid = [[0; GRID]; GRID];
    for o in &objects {
        for (r, c) in o.mask.cells() {
            debug_assert_eq!(grid[r][c], 0, "objects overlap");
            grid[r][c] = o.color;
        }
    }
    Some(Observation {
        grid,
        objects,
        task_id: spec.task_id,
        obs_id: 0,
        edges,
    })
}

/// Random position for `f` within `region = (row, col, height, width)` whose
/// box avoids every box in `taken`.
fn place<R: Rng + ?Sized>(
    f: Footprint,
    region: (usize, usize, usize, usize),
    taken: &[BBox],
    rng: &mut R,
) -> Option<BBox> {
    let (row0, col0, h, w) = region;
    if f.height > h || f.width > w {
        return None;
    }
    for _ in 0..PLACEMENT_TRIES {
        let bbox = BBox {
            row: row0 + rng.random_range(0..=h - f.height),
            col: col0 + rng.random_range(0..=w - f.width),
            height: f.height,
            width: f.width,
        };
        if taken.iter().all(|t| !t.intersects(&bbox)) {
            return Some(bbox);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use RelationType::*;

    fn object(shape: ShapeKind, color: u8, row: usize, col: usize, h: usize, w: usize) -> SceneObject {
        let mut mask = Mask::default();
        for (r, c) in draw(shape, h, w, 0) {
            mask.set(row + r, col + c);
        }
        SceneObject {
            shape,
            color,
            bbox: mask.bbox().unwrap(),
            mask,
            is_core: true,
        }
    }

    #[test]
    fn oracle_examples() {
        let brown = 9;
        let yellow = 4;
        let rect = object(ShapeKind::Rect, brown, 0, 0, 4, 5);
        let l_brown = object(ShapeKind::LShape, brown, 8, 0, 3, 3);
        let l_yellow = object(ShapeKind::LShape, yellow, 8, 8, 4, 2);
        assert_eq!(relation_oracle(&rect, &l_brown), SameColor);
        assert_eq!(relation_oracle(&l_brown, &l_yellow), SameShape);
        assert_eq!(relation_oracle(&l_brown, &l_brown.clone()), SameColor);
        let blue_box = object(ShapeKind::Rect, 2, 0, 8, 6, 6);
        let red_line = object(ShapeKind::Line, 3, 2, 9, 1, 4);
        assert_eq!(relation_oracle(&blue_box, &red_line), Inside);
        assert_eq!(relation_oracle(&red_line, &blue_box), Inside);
        assert_eq!(relation_oracle(&red_line, &l_yellow), None);
    }

    #[test]
    fn solid_rect_contains_nothing() {
        let solid = object(ShapeKind::RectSolid, 2, 0, 0, 8, 8);
        let dot = object(ShapeKind::Line, 3, 2, 2, 1, 3);
        assert_eq!(relation_oracle(&solid, &dot), None);
    }

    #[test]
    fn closure_adds_transitive_equalities() {
        let spec = TaskSpec::new(5, 3, &[((0, 1), SameColor), ((1, 2), SameColor)]);
        let edges: Vec<(usize, usize, RelationType)> =
            spec.closure().iter().map(|e| (e.k, e.l, e.relation)).collect();
        assert_eq!(edges, vec![(0, 1, SameColor), (0, 2, SameColor), (1, 2, SameColor)]);
        let spec = TaskSpec::new(1, 3, &[((0, 1), Inside), ((1, 2), SameColor)]);
        assert_eq!(spec.closure().len(), 2);
    }

    #[test]
    fn shapes_have_expected_cells() {
        assert_eq!(draw(ShapeKind::Rect, 3, 3, 0).len(), 8);
        assert_eq!(draw(ShapeKind::RectSolid, 3, 4, 0).len(), 12);
        assert_eq!(draw(ShapeKind::LShape, 3, 4, 2).len(), 6);
        assert_eq!(draw(ShapeKind::Line, 1, 5, 0).len(), 5);
    }

    #[test]
    fn generated_inside_task_has_one_inside_edge() {
        let spec = TaskSpec::new(2, 2, &[((0, 1), Inside)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let obs = generate_observation(&spec, 0, &mut rng).unwrap();
            assert_eq!(obs.objects.len(), 2);
            assert_eq!(obs.edges, vec![Edge::new(0, 1, Inside)]);
            assert_eq!(oracle_edges(&obs.objects, &[0, 1]), obs.edges);
            assert_eq!(obs.objects.iter().filter(|o| o.shape == ShapeKind::Rect).count(), 1);
        }
    }

    #[test]
    fn unsatisfiable_spec_exhausts() {
        // Five mutually unrelated objects need five distinct shape kinds.
        let spec = TaskSpec::new(9, 5, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_observation_with(&spec, 0, 20, &mut rng),
            Err(SceneError::GenerationExhausted { attempts: 20, .. })
        ));
    }
}
