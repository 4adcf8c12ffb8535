//! Local image mutations and the semantic constraint that bounds them.
//!
//! Images are `H x W x C` tensors with pixel values in `[0, 255]`. A
//! [`RegionGrid`] splits the image into `rows x cols` rectangles; a
//! [`MutationOp`] picks an operator (brightness, blur, contrast) and an
//! intensity level whose magnitude comes from [`LevelTables`].

mod sequence;

pub use sequence::{mutate_sequence, Mutant, SequenceOutcome};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MutationError;
use crate::tensor::Tensor;

/// Pixel rectangle `[top, top + height) x [left, left + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Rect {
            top,
            left,
            height,
            width,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.top + self.height).contains(&y)
            && (self.left..self.left + self.width).contains(&x)
    }

    fn fits(&self, height: usize, width: usize) -> bool {
        self.height > 0
            && self.width > 0
            && self.top + self.height <= height
            && self.left + self.width <= width
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}@({},{})",
            self.height, self.width, self.top, self.left
        )
    }
}

/// A `rows x cols` partition of an image. The last row and column absorb
/// the remainder when the image does not divide evenly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionGrid {
    rows: usize,
    cols: usize,
    height: usize,
    width: usize,
}

impl RegionGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        height: usize,
        width: usize,
    ) -> Result<Self, MutationError> {
        if rows == 0 || cols == 0 || rows > height || cols > width {
            return Err(MutationError::InvalidParams(format!(
                "a {rows}x{cols} grid does not fit a {height}x{width} image"
            )));
        }
        Ok(RegionGrid {
            rows,
            cols,
            height,
            width,
        })
    }

    /// 2x2 for images whose shorter side is under 24 pixels, 3x3 otherwise.
    pub fn default_for(height: usize, width: usize) -> Result<Self, MutationError> {
        let side = if height.min(width) < 24 { 2 } else { 3 };
        Self::new(side, side, height, width)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of regions.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Region `i`, numbered row-major. Panics if `i >= len()`.
    pub fn region(&self, i: usize) -> Rect {
        assert!(
            i < self.len(),
            "region {i} out of range for {} regions",
            self.len()
        );
        let (r, c) = (i / self.cols, i % self.cols);
        let (bh, bw) = (self.height / self.rows, self.width / self.cols);
        let height = if r + 1 == self.rows {
            self.height - bh * r
        } else {
            bh
        };
        let width = if c + 1 == self.cols {
            self.width - bw * c
        } else {
            bw
        };
        Rect::new(r * bh, c * bw, height, width)
    }

    pub fn regions(&self) -> impl Iterator<Item = Rect> + '_ {
        (0..self.len()).map(|i| self.region(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Brightness = 0,
    Blur = 1,
    Contrast = 2,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 3] = [
        OperatorKind::Brightness,
        OperatorKind::Blur,
        OperatorKind::Contrast,
    ];
    pub const COUNT: usize = 3;

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MutationOp {
    pub operator: OperatorKind,
    pub level: usize,
}

impl MutationOp {
    pub fn new(operator: OperatorKind, level: usize) -> Self {
        MutationOp { operator, level }
    }
}

/// Per-level magnitudes. All three tables must have the same length `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelTables {
    /// Additive offsets.
    pub brightness: Vec<f32>,
    /// Box-kernel side lengths.
    pub blur: Vec<usize>,
    /// Scale factors about mid-gray.
    pub contrast: Vec<f32>,
}

impl Default for LevelTables {
    fn default() -> Self {
        LevelTables {
            brightness: vec![-40.0, -20.0, 10.0, 20.0, 40.0],
            blur: vec![2, 3, 4, 5, 7],
            contrast: vec![0.6, 0.8, 1.1, 1.25, 1.5],
        }
    }
}

impl LevelTables {
    /// Every level is a no-op. Useful for testing the differs-check.
    pub fn identity(levels: usize) -> Self {
        LevelTables {
            brightness: vec![0.0; levels],
            blur: vec![1; levels],
            contrast: vec![1.0; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.brightness.len()
    }

    pub fn validate(&self) -> Result<(), MutationError> {
        let l = self.brightness.len();
        if l == 0 || self.blur.len() != l || self.contrast.len() != l {
            return Err(MutationError::InvalidParams(format!(
                "level tables must be non-empty and equally long (brightness {}, blur {}, contrast {})",
                l,
                self.blur.len(),
                self.contrast.len()
            )));
        }
        if self.brightness.iter().any(|d| !d.is_finite()) {
            return Err(MutationError::InvalidParams(
                "brightness offsets must be finite".into(),
            ));
        }
        if self.contrast.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(MutationError::InvalidParams(
                "contrast factors must be finite and positive".into(),
            ));
        }
        if self.blur.contains(&0) {
            return Err(MutationError::InvalidParams(
                "blur kernel sizes must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn check_op(&self, op: MutationOp) -> Result<(), MutationError> {
        if op.level >= self.levels() {
            return Err(MutationError::InvalidParams(format!(
                "level {} out of range for {} levels",
                op.level,
                self.levels()
            )));
        }
        Ok(())
    }
}

pub const CONTRAST_PIVOT: f32 = 127.5;

/// Returns a copy of `image` with `op` applied inside `region`.
pub fn apply(
    image: &Tensor,
    region: Rect,
    op: MutationOp,
    tables: &LevelTables,
) -> Result<Tensor, MutationError> {
    let mut out = image.clone();
    apply_in_place(&mut out, region, op, tables)?;
    Ok(out)
}

/// In-place form of [`apply`].
pub fn apply_in_place(
    image: &mut Tensor,
    region: Rect,
    op: MutationOp,
    tables: &LevelTables,
) -> Result<(), MutationError> {
    let (h, w, c) = image
        .shape()
        .as_image()
        .ok_or_else(|| MutationError::NotAnImage(image.shape().to_string()))?;
    if !region.fits(h, w) {
        return Err(MutationError::RegionOutOfBounds {
            region,
            height: h,
            width: w,
        });
    }
    tables.check_op(op)?;
    let data = image.data_mut();
    match op.operator {
        OperatorKind::Brightness => {
            let delta = tables.brightness[op.level];
            map_region(data, region, w, c, |v| v + delta);
        }
        OperatorKind::Contrast => {
            let gamma = tables.contrast[op.level];
            map_region(data, region, w, c, |v| {
                (v - CONTRAST_PIVOT) * gamma + CONTRAST_PIVOT
            });
        }
        OperatorKind::Blur => box_blur(data, region, w, c, tables.blur[op.level]),
    }
    Ok(())
}

fn map_region(data: &mut [f32], r: Rect, w: usize, c: usize, f: impl Fn(f32) -> f32) {
    for y in r.top..r.top + r.height {
        let row = &mut data[(y * w + r.left) * c..(y * w + r.left + r.width) * c];
        for v in row {
            *v = f(*v).clamp(0.0, 255.0);
        }
    }
}

/// Mean over an `s x s` window covering offsets `-(s-1)/2 ..= s/2`, with
/// coordinates outside the region replaced by the nearest region pixel.
fn box_blur(data: &mut [f32], r: Rect, w: usize, c: usize, s: usize) {
    if s <= 1 {
        return;
    }
    let (lo, hi) = ((s as isize - 1) / 2, s as isize / 2);
    let clamp_y = |y: isize| y.clamp(r.top as isize, (r.top + r.height - 1) as isize) as usize;
    let clamp_x = |x: isize| x.clamp(r.left as isize, (r.left + r.width - 1) as isize) as usize;
    let src: Vec<f32> = data.to_vec();
    let norm = 1.0 / (s * s) as f32;
    for y in r.top..r.top + r.height {
        for x in r.left..r.left + r.width {
            for ch in 0..c {
                let mut sum = 0.0f32;
                for dy in -lo..=hi {
                    let yy = clamp_y(y as isize + dy);
                    for dx in -lo..=hi {
                        sum += src[(yy * w + clamp_x(x as isize + dx)) * c + ch];
                    }
                }
                data[(y * w + x) * c + ch] = (sum * norm).clamp(0.0, 255.0);
            }
        }
    }
}

/// Thresholds of the L0/L-infinity semantic constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        ConstraintParams {
            alpha: 0.02,
            beta: 0.2,
        }
    }
}

impl ConstraintParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MutationError> {
        let p = ConstraintParams { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MutationError> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.alpha) || !open(self.beta) {
            return Err(MutationError::InvalidParams(format!(
                "alpha and beta must lie strictly between 0 and 1 (alpha {}, beta {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// The decision itself: few changed pixels may change by anything up to
    /// 255, many changed pixels must stay below `beta * 255`.
    pub fn admits(&self, l0: usize, linf: f64, size: usize) -> bool {
        let few = (l0 as f64) < self.alpha * size as f64;
        if few {
            linf <= 255.0
        } else {
            linf < self.beta * 255.0
        }
    }
}

/// Count of changed values and the largest absolute change.
pub fn pixel_distance(original: &Tensor, mutated: &Tensor) -> Result<(usize, f64), MutationError> {
    if original.shape() != mutated.shape() {
        return Err(MutationError::ShapeMismatch(
            original.shape().to_string(),
            mutated.shape().to_string(),
        ));
    }
    let mut l0 = 0;
    let mut linf = 0.0f64;
    for (&a, &b) in original.data().iter().zip(mutated.data()) {
        if a != b {
            l0 += 1;
            linf = linf.max((a as f64 - b as f64).abs());
        }
    }
    Ok((l0, linf))
}

pub fn check_constraint(
    original: &Tensor,
    mutated: &Tensor,
    params: &ConstraintParams,
) -> Result<bool, MutationError> {
    let (l0, linf) = pixel_distance(original, mutated)?;
    Ok(params.admits(l0, linf, original.len()))
}

/// Everything needed to turn (region, op) choices into images.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationSpace {
    pub grid: RegionGrid,
    pub tables: LevelTables,
    pub constraint: ConstraintParams,
}

impl MutationSpace {
    pub fn new(
        grid: RegionGrid,
        tables: LevelTables,
        constraint: ConstraintParams,
    ) -> Result<Self, MutationError> {
        tables.validate()?;
        constraint.validate()?;
        Ok(MutationSpace {
            grid,
            tables,
            constraint,
        })
    }

    pub fn regions(&self) -> usize {
        self.grid.len()
    }

    pub fn levels(&self) -> usize {
        self.tables.levels()
    }

    /// Number of distinct (operator, level) pairs.
    pub fn op_count(&self) -> usize {
        OperatorKind::COUNT * self.levels()
    }

    /// The `i`-th (operator, level) pair, operator-major.
    pub fn op(&self, i: usize) -> MutationOp {
        MutationOp::new(OperatorKind::ALL[i / self.levels()], i % self.levels())
    }

    pub fn apply_in_place(
        &self,
        image: &mut Tensor,
        region: usize,
        op: MutationOp,
    ) -> Result<(), MutationError> {
        apply_in_place(image, self.grid.region(region), op, &self.tables)
    }

    pub fn admits(&self, original: &Tensor, mutated: &Tensor) -> Result<bool, MutationError> {
        check_constraint(original, mutated, &self.constraint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Tensor::new(Shape::new([h, w, 1]), data).unwrap()
    }

    #[test]
    fn grid_partitions_exactly() {
        for (h, w, rows, cols) in [(28, 28, 3, 3), (10, 7, 2, 2), (32, 32, 3, 3), (5, 9, 2, 4)] {
            let g = RegionGrid::new(rows, cols, h, w).unwrap();
            let mut hits = vec![0; h * w];
            for r in g.regions() {
                for y in r.top..r.top + r.height {
                    for x in r.left..r.left + r.width {
                        hits[y * w + x] += 1;
                    }
                }
            }
            assert!(hits.iter().all(|&n| n == 1), "{h}x{w} {rows}x{cols}");
        }
        assert_eq!(RegionGrid::default_for(28, 28).unwrap().len(), 9);
        assert_eq!(RegionGrid::default_for(20, 28).unwrap().len(), 4);
        assert_eq!(
            RegionGrid::new(3, 3, 28, 28).unwrap().region(8),
            Rect::new(18, 18, 10, 10)
        );
    }

    #[test]
    fn brightness_clamps_and_identity() {
        let t = LevelTables {
            brightness: vec![0.0, 20.0],
            blur: vec![1, 1],
            contrast: vec![1.0, 1.0],
        };
        let im = img(4, 4, |y, x| if y == 1 && x == 1 { 250.0 } else { 100.0 });
        let r = Rect::new(0, 0, 2, 2);
        assert_eq!(
            apply(&im, r, MutationOp::new(OperatorKind::Brightness, 0), &t).unwrap(),
            im
        );
        let out = apply(&im, r, MutationOp::new(OperatorKind::Brightness, 1), &t).unwrap();
        assert_eq!(out.data()[5], 255.0);
        assert_eq!(out.data()[0], 120.0);
        assert_eq!(out.data()[2], 100.0);
    }

    #[test]
    fn contrast_pivots_on_mid_gray() {
        let t = LevelTables::default();
        let im = img(2, 2, |y, _| if y == 0 { 127.5 } else { 27.5 });
        let out = apply(
            &im,
            Rect::new(0, 0, 2, 2),
            MutationOp::new(OperatorKind::Contrast, 4),
            &t,
        )
        .unwrap();
        assert_eq!(out.data(), &[127.5, 127.5, 0.0, 0.0]);
    }

    #[test]
    fn blur_fixed_point_and_edge_replication() {
        let t = LevelTables::default();
        let flat = img(6, 6, |_, _| 42.0);
        for level in 0..5 {
            let out = apply(
                &flat,
                Rect::new(1, 1, 4, 4),
                MutationOp::new(OperatorKind::Blur, level),
                &t,
            )
            .unwrap();
            assert_eq!(out, flat);
        }
        // 3x3 blur of a 1x3 region [0, 30, 60]: replicated rows, so each
        // output is the mean of its horizontal neighbourhood.
        let row = img(1, 3, |_, x| 30.0 * x as f32);
        let out = apply(
            &row,
            Rect::new(0, 0, 1, 3),
            MutationOp::new(OperatorKind::Blur, 1),
            &t,
        )
        .unwrap();
        assert_eq!(out.data(), &[10.0, 30.0, 50.0]);
    }

    #[test]
    fn out_of_bounds_region_is_rejected() {
        let im = img(4, 4, |_, _| 0.0);
        let err = apply(
            &im,
            Rect::new(3, 0, 2, 1),
            MutationOp::new(OperatorKind::Blur, 0),
            &LevelTables::default(),
        );
        assert!(matches!(err, Err(MutationError::RegionOutOfBounds { .. })));
    }

    #[test]
    fn constraint_examples() {
        let p = ConstraintParams::default();
        let a = img(10, 10, |_, _| 100.0);
        assert!(check_constraint(&a, &a, &p).unwrap());
        let mut b = a.clone();
        b.data_mut()[7] = 255.0;
        assert!(check_constraint(&a, &b, &p).unwrap());
        let mut c = a.clone();
        for v in &mut c.data_mut()[..50] {
            *v = 160.0;
        }
        assert!(!check_constraint(&a, &c, &p).unwrap());
        assert!(ConstraintParams::new(0.0, 0.5).is_err());
        assert!(ConstraintParams::new(0.5, 1.0).is_err());
    }

    #[test]
    fn level_tables_validation() {
        assert!(LevelTables::default().validate().is_ok());
        let mut t = LevelTables::default();
        t.blur.pop();
        assert!(t.validate().is_err());
        let mut t = LevelTables::default();
        t.contrast[0] = 0.0;
        assert!(t.validate().is_err());
    }
}
