//! Shape analysis of binarized cells: void connectivity and top-surface
//! profiles of trench-like structures.

use crate::field::BinaryImage;

/// Labels the void (0) pixels by 4-connected component. Connectivity wraps
/// in x (the periodic axis) but not in y. Solid pixels get `None`.
pub fn void_components(img: &BinaryImage) -> (Vec<Option<usize>>, usize) {
    components(img, 0)
}

fn components(img: &BinaryImage, value: u8) -> (Vec<Option<usize>>, usize) {
    let (w, h) = (img.width(), img.height());
    let mut labels = vec![None; w * h];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if img.data()[start] != value || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(count);
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if img.data()[j] == value && labels[j].is_none() {
                    labels[j] = Some(count);
                    stack.push(j);
                }
            };
            visit(r * w + (c + 1) % w);
            visit(r * w + (c + w - 1) % w);
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
        }
        count += 1;
    }
    (labels, count)
}

/// Number of void components that do not reach the top row.
pub fn enclosed_void_count(img: &BinaryImage) -> usize {
    let (labels, count) = void_components(img);
    let mut open = vec![false; count];
    for l in labels[..img.width()].iter().flatten() {
        open[*l] = true;
    }
    open.iter().filter(|o| !**o).count()
}

/// Depth (first solid row) of every column, or `None` if some column is not
/// a single void run above a single solid run reaching the bottom.
pub fn surface_profile(img: &BinaryImage) -> Option<Vec<usize>> {
    let (w, h) = (img.width(), img.height());
    let mut depths = Vec::with_capacity(w);
    for c in 0..w {
        let top = (0..h).find(|&r| img.get(r, c))?;
        if (top..h).any(|r| !img.get(r, c)) {
            return None;
        }
        depths.push(top);
    }
    Some(depths)
}

/// Surface of a cell that may have overhangs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenProfile {
    /// One past the deepest void pixel of each column.
    pub depths: Vec<usize>,
    /// Solid pixels lying above their column's depth.
    pub overhang: usize,
}

/// Depth profile of a single slab under a single open void: all void is
/// connected to the top row, all solid is one component touching the
/// bottom row. `None` otherwise. Without overhangs the depths equal
/// [`surface_profile`].
pub fn open_profile(img: &BinaryImage) -> Option<OpenProfile> {
    let (w, h) = (img.width(), img.height());
    if enclosed_void_count(img) > 0 {
        return None;
    }
    let (solid, n_solid) = components(img, 1);
    if n_solid != 1 || solid[(h - 1) * w..].iter().any(|l| l.is_none()) {
        return None;
    }
    let mut depths = Vec::with_capacity(w);
    let mut overhang = 0;
    for c in 0..w {
        let depth = (0..h).rev().find(|&r| !img.get(r, c)).map_or(0, |r| r + 1);
        overhang += (0..depth).filter(|&r| img.get(r, c)).count();
        depths.push(depth);
    }
    Some(OpenProfile { depths, overhang })
}

/// Periodic runs of columns lying deeper than the flat surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Depression {
    pub start: usize,
    pub width: usize,
    pub max_depth: usize,
}

/// Finds depressions below the shallowest surface level. A column counts as
/// depressed when it is more than `tolerance` rows below that level.
pub fn depressions(depths: &[usize], tolerance: usize) -> Vec<Depression> {
    let w = depths.len();
    let Some(&surface) = depths.iter().min() else {
        return Vec::new();
    };
    let deep: Vec<bool> = depths.iter().map(|&d| d > surface + tolerance).collect();
    let Some(anchor) = (0..w).find(|&c| !deep[c]) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut k = 1;
    while k <= w {
        let c = (anchor + k) % w;
        if deep[c] {
            let start = c;
            let mut width = 0;
            let mut max_depth = 0;
            while k <= w && deep[(anchor + k) % w] {
                max_depth = max_depth.max(depths[(anchor + k) % w] - surface);
                width += 1;
                k += 1;
            }
            out.push(Depression { start, width, max_depth });
        } else {
            k += 1;
        }
    }
    out
}

/// Scanline check for "a single slab with 1 to `max_trenches` top-surface
/// depressions". The void must be open and the solid a single slab, a flat
/// region must exist, and each depression has to be at least `min_width`
/// columns wide and `min_depth` rows deep. Overhanging solid (ledges on
/// trench walls) is allowed up to `max_overhang` of the depression area.
#[derive(Debug, Clone, Copy)]
pub struct TrenchCheck {
    pub min_trenches: usize,
    pub max_trenches: usize,
    pub tolerance: usize,
    pub min_width: usize,
    pub min_depth: usize,
    pub max_overhang: f64,
}

impl Default for TrenchCheck {
    fn default() -> Self {
        Self {
            min_trenches: 1,
            max_trenches: 3,
            tolerance: 1,
            min_width: 2,
            min_depth: 2,
            max_overhang: 0.1,
        }
    }
}

impl TrenchCheck {
    pub fn count(&self, img: &BinaryImage) -> Option<usize> {
        let profile = open_profile(img)?;
        let depths = &profile.depths;
        let found = depressions(depths, self.tolerance);
        if found
            .iter()
            .any(|d| d.width < self.min_width || d.max_depth < self.min_depth)
        {
            return None;
        }
        let surface = depths.iter().min().copied().unwrap_or(0);
        let w = depths.len();
        let area: usize = found
            .iter()
            .flat_map(|d| (d.start..d.start + d.width).map(move |c| c % w))
            .map(|c| depths[c] - surface)
            .sum();
        if profile.overhang as f64 > self.max_overhang * area as f64 {
            return None;
        }
        Some(found.len())
    }

    pub fn is_trench_like(&self, img: &BinaryImage) -> bool {
        self.count(img)
            .is_some_and(|n| n >= self.min_trenches && n <= self.max_trenches)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> BinaryImage {
        let w = rows[0].len();
        BinaryImage::from_fn(w, rows.len(), |r, c| rows[r].as_bytes()[c] == b'#')
    }

    #[test]
    fn enclosed_void_detected() {
        let img = from_rows(&[
            "......", //
            "######",
            "##..##",
            "######",
        ]);
        assert_eq!(enclosed_void_count(&img), 1);
        let open = from_rows(&[
            "......", //
            "##..##",
            "##..##",
            "######",
        ]);
        assert_eq!(enclosed_void_count(&open), 0);
    }

    #[test]
    fn void_wraps_in_x() {
        let img = from_rows(&[
            "......", //
            "######",
            ".####.",
            "######",
        ]);
        let (_, n) = void_components(&img);
        assert_eq!(n, 2);
        assert_eq!(enclosed_void_count(&img), 1);
    }

    #[test]
    fn trench_profile_and_count() {
        let img = from_rows(&[
            "..........", //
            "####..####",
            "####..####",
            "####..####",
            "##########",
        ]);
        let d = surface_profile(&img).unwrap();
        assert_eq!(d, vec![1, 1, 1, 1, 4, 4, 1, 1, 1, 1]);
        let found = depressions(&d, 1);
        assert_eq!(found, vec![Depression { start: 4, width: 2, max_depth: 3 }]);
        assert!(TrenchCheck::default().is_trench_like(&img));
    }

    #[test]
    fn small_ledges_are_tolerated() {
        let ledge = from_rows(&[
            "..............", //
            "#####..#######",
            "#####....#####",
            "#####....#####",
            "#####....#####",
            "#####....#####",
            "#####....#####",
            "##############",
        ]);
        let p = open_profile(&ledge).unwrap();
        assert_eq!(p.overhang, 2);
        assert_eq!(p.depths[7], 7);
        assert!(TrenchCheck::default().is_trench_like(&ledge));
        // A lid over most of the trench is not a trench.
        let lidded = from_rows(&[
            "..............", //
            "#####.########",
            "#####.########",
            "#####.########",
            "#####....#####",
            "#####....#####",
            "#####....#####",
            "##############",
        ]);
        assert_eq!(open_profile(&lidded).unwrap().overhang, 9);
        assert!(!TrenchCheck::default().is_trench_like(&lidded));
    }

    #[test]
    fn open_profile_matches_scanline_without_overhang() {
        let img = from_rows(&[
            "..........", //
            "###....###",
            "####..####",
            "##########",
        ]);
        let p = open_profile(&img).unwrap();
        assert_eq!(p.overhang, 0);
        assert_eq!(Some(p.depths), surface_profile(&img));
    }

    #[test]
    fn wrapped_depression_counts_once() {
        let d = vec![5, 1, 1, 1, 1, 5];
        let found = depressions(&d, 1);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].width, 2);
        assert_eq!(found[0].start, 5);
    }

    #[test]
    fn islands_and_flat_slabs_are_not_trench_like() {
        let island = from_rows(&[
            "..#.......", //
            "##.#..####",
            "####..####",
            "##########",
        ]);
        assert!(!TrenchCheck::default().is_trench_like(&island));
        let hole = from_rows(&[
            "..........", //
            "####..####",
            "####..####",
            "#.########",
            "##########",
        ]);
        assert!(!TrenchCheck::default().is_trench_like(&hole));
        let floating = from_rows(&[
            "...##.....", //
            "..........",
            "####..####",
            "##########",
        ]);
        assert!(open_profile(&floating).is_none());
        let flat = from_rows(&["....", "####", "####"]);
        assert_eq!(TrenchCheck::default().count(&flat), Some(0));
        assert!(!TrenchCheck::default().is_trench_like(&flat));
    }
}
