//! Piecewise-linear curves on the quantile domain `[0, 1]`.
//!
//! A jump at `q` is stored as two vertices sharing `q`: the left limit first,
//! the right limit second. Point evaluation returns the right limit.

use std::fmt::Write as _;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub q: f64,
    pub value: f64,
}

impl Vertex {
    pub fn new(q: f64, value: f64) -> Self {
        Self { q, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearCurve {
    vertices: Vec<Vertex>,
}

/// Disjoint, sorted open quantile intervals `(a, b)`. Neighbours may share an endpoint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantileIntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl QuantileIntervalSet {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(a, b) in &intervals {
            if !(0.0 <= a && a < b && b <= 1.0) {
                return Err(invalid(format!(
                    "quantile interval ({a}, {b}) is not inside [0, 1]"
                )));
            }
        }
        if intervals.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(invalid("quantile intervals overlap"));
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, q: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a < q && q < b)
    }
}

/// Linear piece replacing the curve on `(a, b)`; endpoint values are given explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chord {
    pub a: f64,
    pub va: f64,
    pub b: f64,
    pub vb: f64,
}

impl Chord {
    fn at(&self, q: f64) -> f64 {
        self.va + (self.vb - self.va) * ((q - self.a) / (self.b - self.a))
    }
}

fn lerp(a: Vertex, b: Vertex, q: f64) -> f64 {
    a.value + (b.value - a.value) * ((q - a.q) / (b.q - a.q))
}

fn check_unit(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(invalid(format!("quantile {q} outside [0, 1]")))
    }
}

impl PiecewiseLinearCurve {
    pub fn new(vertices: Vec<Vertex>) -> Result<Self> {
        let (first, last) = match (vertices.first(), vertices.last()) {
            (Some(f), Some(l)) if vertices.len() >= 2 => (f, l),
            _ => return Err(invalid("a curve needs at least two vertices")),
        };
        if first.q != 0.0 || last.q != 1.0 {
            return Err(invalid("curve must start at q = 0 and end at q = 1"));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !(v.q.is_finite() && v.value.is_finite()) {
                return Err(invalid("curve vertices must be finite"));
            }
            if i > 0 && v.q < vertices[i - 1].q {
                return Err(invalid("curve quantiles must be nondecreasing"));
            }
            if i > 1 && v.q == vertices[i - 2].q {
                return Err(invalid(format!("more than two vertices at q = {}", v.q)));
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .map(|&(q, value)| Vertex { q, value })
                .collect(),
        )
    }

    pub fn constant(value: f64) -> Self {
        Self {
            vertices: vec![Vertex::new(0.0, value), Vertex::new(1.0, value)],
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Distinct breakpoint quantiles in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut qs: Vec<f64> = self.vertices.iter().map(|v| v.q).collect();
        qs.dedup();
        qs
    }

    /// Value at `q`; the right limit at a jump.
    pub fn evaluate(&self, q: f64) -> Result<f64> {
        check_unit(q)?;
        Ok(self.right_at(q))
    }

    /// Limit from the left at `q` (the value itself at `q = 0`).
    pub fn left_value(&self, q: f64) -> Result<f64> {
        check_unit(q)?;
        Ok(self.left_at(q))
    }

    pub(crate) fn right_at(&self, q: f64) -> f64 {
        let v = &self.vertices;
        let idx = v.partition_point(|x| x.q <= q);
        if idx == 0 {
            return v[0].value;
        }
        let i = idx - 1;
        if v[i].q == q || idx == v.len() {
            v[i].value
        } else {
            lerp(v[i], v[idx], q)
        }
    }

    pub(crate) fn left_at(&self, q: f64) -> f64 {
        let v = &self.vertices;
        let j = v.partition_point(|x| x.q < q);
        if j == 0 {
            v[0].value
        } else if j == v.len() {
            v[j - 1].value
        } else if v[j].q == q {
            v[j].value
        } else {
            lerp(v[j - 1], v[j], q)
        }
    }

    pub fn max_value(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Least concave majorant: the upper hull of every vertex, jump limits included.
    pub fn concave_envelope(&self) -> Self {
        let mut points: Vec<Vertex> = Vec::with_capacity(self.vertices.len());
        for &v in &self.vertices {
            match points.last_mut() {
                Some(last) if last.q == v.q => last.value = last.value.max(v.value),
                _ => points.push(v),
            }
        }
        let mut hull: Vec<Vertex> = Vec::with_capacity(points.len());
        for p in points {
            while hull.len() >= 2 {
                let o = hull[hull.len() - 2];
                let a = hull[hull.len() - 1];
                let cross = (a.q - o.q) * (p.value - o.value) - (a.value - o.value) * (p.q - o.q);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        Self { vertices: hull }
    }

    /// Whether consecutive slopes are nonincreasing up to a relative tolerance.
    pub fn is_concave(&self, rel_tol: f64) -> bool {
        let v = &self.vertices;
        let slopes: Vec<f64> = v
            .windows(2)
            .filter(|w| w[1].q > w[0].q)
            .map(|w| (w[1].value - w[0].value) / (w[1].q - w[0].q))
            .collect();
        let has_jump = v
            .windows(2)
            .any(|w| w[0].q == w[1].q && w[0].value != w[1].value);
        !has_jump
            && slopes.windows(2).all(|s| {
                let scale = s[0].abs().max(s[1].abs()).max(1.0);
                s[1] - s[0] <= rel_tol * scale
            })
    }

    /// Per-vertex flag: does the vertex lie on `hull` within `tol`?
    pub fn touch_flags(&self, hull: &Self, tol: f64) -> Vec<bool> {
        self.vertices
            .iter()
            .map(|v| hull.right_at(v.q) - v.value <= tol)
            .collect()
    }

    /// Pairs of vertex indices `(i, j)` bounding each maximal run of vertices strictly below the hull.
    fn gap_runs(&self, hull: &Self, tol: f64) -> Vec<(usize, usize)> {
        let touch = self.touch_flags(hull, tol);
        let mut runs = Vec::new();
        let mut last_touch: Option<usize> = None;
        let mut gap_since = false;
        for (idx, &t) in touch.iter().enumerate() {
            if t {
                if let Some(i) = last_touch {
                    if gap_since && self.vertices[i].q < self.vertices[idx].q {
                        runs.push((i, idx));
                    }
                }
                last_touch = Some(idx);
                gap_since = false;
            } else {
                gap_since = true;
            }
        }
        runs
    }

    /// Open intervals on which `hull` exceeds the curve by more than `tol`.
    pub fn difference_intervals(&self, hull: &Self, tol: f64) -> QuantileIntervalSet {
        let intervals = self
            .gap_runs(hull, tol)
            .into_iter()
            .map(|(i, j)| (self.vertices[i].q, self.vertices[j].q))
            .collect();
        QuantileIntervalSet { intervals }
    }

    fn attained(&self, idx: usize) -> bool {
        idx + 1 == self.vertices.len() || self.vertices[idx + 1].q != self.vertices[idx].q
    }

    /// Index of the maximizing vertex. Among vertices within `tol` of the maximum,
    /// values actually attained (right limits) win, smallest `q` first; if the
    /// supremum is only approached from the left, the smallest such left limit wins.
    pub fn argmax_vertex(&self, tol: f64) -> usize {
        let top = self.max_value();
        let near: Vec<usize> = (0..self.vertices.len())
            .filter(|&i| top - self.vertices[i].value <= tol)
            .collect();
        near.iter()
            .copied()
            .find(|&i| self.attained(i))
            .unwrap_or(near[0])
    }

    pub fn argmax_quantile(&self, tol: f64) -> f64 {
        self.vertices[self.argmax_vertex(tol)].q
    }

    /// The induced curve: chords across `ironing` and a plateau at the left
    /// value of `reserve_q` beyond it. Intervals are clipped at the reserve.
    pub fn induce(&self, ironing: &QuantileIntervalSet, reserve_q: f64) -> Result<Self> {
        check_unit(reserve_q)?;
        let chords: Vec<Chord> = ironing
            .intervals()
            .iter()
            .filter(|&&(a, _)| a < reserve_q)
            .map(|&(a, b)| {
                let b = b.min(reserve_q);
                Chord {
                    a,
                    va: self.left_at(a),
                    b,
                    vb: self.left_at(b),
                }
            })
            .collect();
        let plateau = self.left_at(reserve_q);
        let end = if reserve_q < 1.0 {
            plateau
        } else if let Some(c) = chords.last().filter(|c| c.b == 1.0) {
            c.vb
        } else {
            self.right_at(1.0)
        };
        Ok(self.induce_with(&chords, reserve_q, plateau, end))
    }

    /// General induced-curve builder. `chords` must be sorted, disjoint and end
    /// at or before `reserve_q`; `end` is the point value at `q = 1`.
    pub fn induce_with(&self, chords: &[Chord], reserve_q: f64, plateau: f64, end: f64) -> Self {
        let mut qs: Vec<f64> = self
            .vertices
            .iter()
            .map(|v| v.q)
            .filter(|&q| q <= reserve_q)
            .chain(chords.iter().flat_map(|c| [c.a, c.b]))
            .chain([0.0, reserve_q, 1.0])
            .collect();
        qs.sort_by(f64::total_cmp);
        qs.dedup();

        let left = |x: f64| -> f64 {
            if x == 0.0 {
                self.vertices[0].value
            } else if x > reserve_q {
                plateau
            } else if let Some(c) = chords.iter().find(|c| c.a < x && x <= c.b) {
                if x == c.b {
                    c.vb
                } else {
                    c.at(x)
                }
            } else {
                self.left_at(x)
            }
        };
        let right = |x: f64| -> f64 {
            if x == 1.0 {
                end
            } else if x >= reserve_q {
                plateau
            } else if let Some(c) = chords.iter().find(|c| c.a <= x && x < c.b) {
                if x == c.a {
                    c.va
                } else {
                    c.at(x)
                }
            } else {
                self.right_at(x)
            }
        };

        let mut vertices = Vec::with_capacity(2 * qs.len());
        for &x in &qs {
            let l = left(x);
            let r = right(x);
            vertices.push(Vertex::new(x, l));
            if r != l {
                vertices.push(Vertex::new(x, r));
            }
        }
        Self { vertices }
    }

    /// `max_q (self(q) - other(q))`, checking both one-sided limits at every breakpoint of either curve.
    pub fn pointwise_gap(&self, other: &Self) -> f64 {
        let mut qs: Vec<f64> = self
            .vertices
            .iter()
            .chain(other.vertices.iter())
            .map(|v| v.q)
            .collect();
        qs.sort_by(f64::total_cmp);
        qs.dedup();
        qs.iter()
            .flat_map(|&q| {
                [
                    self.left_at(q) - other.left_at(q),
                    self.right_at(q) - other.right_at(q),
                ]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `q,value` rows, one per vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,value\n");
        for v in &self.vertices {
            let _ = writeln!(out, "{},{}", v.q, v.value);
        }
        out
    }
}

/// Default tolerance for hull contact, scaled by the value bound.
pub fn ironing_tolerance(h_max: f64) -> f64 {
    1e-9 * h_max
}

/// A revenue curve whose vertices also carry the posted price `v` with `value = q·v`.
///
/// Prices are what let quantile-space ironing be mapped back to value space
/// without re-deriving which side of a jump an interval endpoint belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueCurve {
    curve: PiecewiseLinearCurve,
    prices: Vec<f64>,
}

/// One ironing interval in both coordinates: quantiles `(a, b)` and prices `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IroningSpan {
    pub a: f64,
    pub b: f64,
    pub lo: f64,
    pub hi: f64,
}

impl RevenueCurve {
    /// Builds `q·p(q)` from a nonincreasing step price `p`. Each `(start, price)`
    /// holds on `[start, next start)`, the last one through `q = 1`. Starts are
    /// clamped into `[0, 1]`; empty steps are ignored.
    pub fn from_price_steps(steps: &[(f64, f64)]) -> Self {
        let clamped: Vec<(f64, f64)> = steps
            .iter()
            .filter(|s| s.0 <= 1.0)
            .map(|&(s, p)| (s.max(0.0), p))
            .collect();
        let mut vertices: Vec<Vertex> = Vec::new();
        let mut prices: Vec<f64> = Vec::new();
        let mut push = |q: f64, p: f64| {
            let value = q * p;
            if let Some(last) = vertices.last() {
                if last.q == q && last.value == value {
                    return;
                }
            }
            vertices.push(Vertex::new(q, value));
            prices.push(p);
        };
        for (j, &(start, price)) in clamped.iter().enumerate() {
            let end = clamped.get(j + 1).map_or(1.0, |s| s.0);
            if end <= start && j + 1 < clamped.len() {
                continue;
            }
            push(start, price);
            if end > start {
                push(end, price);
            }
        }
        if vertices.first().is_none_or(|v| v.q > 0.0) {
            let p = clamped.first().map_or(0.0, |s| s.1);
            vertices.insert(0, Vertex::new(0.0, 0.0));
            prices.insert(0, p);
        }
        Self {
            curve: PiecewiseLinearCurve { vertices },
            prices,
        }
    }

    /// Linear interpolation through `(q, q·price)` samples covering `[0, 1]`.
    pub fn from_continuous_prices(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (vertices, prices) = points
            .into_iter()
            .map(|(q, p)| (Vertex::new(q, q * p), p))
            .unzip();
        Self {
            curve: PiecewiseLinearCurve { vertices },
            prices,
        }
    }

    pub fn curve(&self) -> &PiecewiseLinearCurve {
        &self.curve
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn into_curve(self) -> PiecewiseLinearCurve {
        self.curve
    }

    fn first_at(&self, idx: usize) -> usize {
        let v = self.curve.vertices();
        if idx > 0 && v[idx - 1].q == v[idx].q {
            idx - 1
        } else {
            idx
        }
    }

    /// Ironing intervals of the curve against its own concave envelope. The
    /// price interval runs from the price just inside `b` up to (excluding)
    /// the price just before `a`.
    pub fn ironing_spans(&self, tol: f64) -> Vec<IroningSpan> {
        let hull = self.curve.concave_envelope();
        self.curve
            .gap_runs(&hull, tol)
            .into_iter()
            .map(|(i, j)| IroningSpan {
                a: self.curve.vertices[i].q,
                b: self.curve.vertices[j].q,
                lo: self.prices[self.first_at(j)],
                hi: self.prices[self.first_at(i)],
            })
            .collect()
    }

    /// The revenue-maximizing posted price and its quantile.
    pub fn reserve(&self, tol: f64) -> (f64, f64) {
        let idx = self.curve.argmax_vertex(tol);
        (self.prices[idx], self.curve.vertices[idx].q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(curve: &PiecewiseLinearCurve) -> Vec<(f64, f64)> {
        curve.vertices().iter().map(|v| (v.q, v.value)).collect()
    }

    fn example_two() -> RevenueCurve {
        RevenueCurve::from_price_steps(&[(0.0, 5.0), (0.1, 1.0)])
    }

    fn example_one(h: f64) -> RevenueCurve {
        RevenueCurve::from_price_steps(&[(0.0, h), (1.0 / h, 1.0)])
    }

    #[test]
    fn construction_rejects_malformed_vertices() {
        assert!(PiecewiseLinearCurve::from_points(&[(0.0, 0.0)]).is_err());
        assert!(PiecewiseLinearCurve::from_points(&[(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(PiecewiseLinearCurve::from_points(&[
            (0.0, 0.0),
            (0.6, 1.0),
            (0.5, 1.0),
            (1.0, 0.0)
        ])
        .is_err());
        assert!(PiecewiseLinearCurve::from_points(&[
            (0.0, 0.0),
            (0.5, 1.0),
            (0.5, 2.0),
            (0.5, 3.0),
            (1.0, 0.0)
        ])
        .is_err());
    }

    #[test]
    fn evaluation_conventions() {
        let line = PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(line.evaluate(0.3).unwrap(), 0.3);
        assert!(line.evaluate(1.1).is_err());
        assert!(line.evaluate(-0.1).is_err());

        let jump =
            PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (0.5, 2.0), (0.5, 1.0), (1.0, 1.0)])
                .unwrap();
        assert_eq!(jump.evaluate(0.5).unwrap(), 1.0);
        assert_eq!(jump.left_value(0.5).unwrap(), 2.0);

        // R(0.1) = 0.1·F⁻¹(0.9) = 0.1; the 0.5 is the limit from the left.
        assert_eq!(example_two().curve().evaluate(0.1).unwrap(), 0.1);
        assert_eq!(example_two().curve().left_value(0.1).unwrap(), 0.5);
    }

    #[test]
    fn hull_of_examples() {
        let hull = example_two().curve().concave_envelope();
        assert_eq!(pts(&hull), vec![(0.0, 0.0), (0.1, 0.5), (1.0, 1.0)]);

        let h = 10.0;
        let hull = example_one(h).curve().concave_envelope();
        assert_eq!(pts(&hull), vec![(0.0, 0.0), (1.0 / h, 1.0), (1.0, 1.0)]);

        let concave =
            PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (0.3, 0.6), (1.0, 0.8)]).unwrap();
        assert_eq!(concave.concave_envelope(), concave);
    }

    #[test]
    fn difference_intervals_of_examples() {
        let r = example_two();
        let hull = r.curve().concave_envelope();
        assert_eq!(
            r.curve().difference_intervals(&hull, 1e-9).intervals(),
            &[(0.1, 1.0)]
        );

        let r = example_one(10.0);
        let hull = r.curve().concave_envelope();
        assert_eq!(
            r.curve().difference_intervals(&hull, 1e-8).intervals(),
            &[(0.1, 1.0)]
        );

        let concave =
            PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (0.3, 0.6), (1.0, 0.8)]).unwrap();
        assert!(concave.difference_intervals(&concave, 1e-9).is_empty());
    }

    #[test]
    fn spans_map_to_value_intervals() {
        let spans = example_two().ironing_spans(5e-9);
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].lo, spans[0].hi), (1.0, 5.0));
        assert_eq!(example_two().reserve(5e-9), (1.0, 1.0));

        let spans = example_one(10.0).ironing_spans(1e-8);
        assert_eq!((spans[0].lo, spans[0].hi), (1.0, 10.0));
        assert_eq!(example_one(10.0).reserve(1e-8), (1.0, 1.0));
    }

    #[test]
    fn argmax_tie_rules() {
        let line = PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(line.argmax_quantile(0.0), 1.0);
        let tent =
            PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (0.4, 1.0), (1.0, 0.2)]).unwrap();
        assert_eq!(tent.argmax_quantile(0.0), 0.4);
        assert_eq!(
            PiecewiseLinearCurve::constant(2.0).argmax_quantile(0.0),
            0.0
        );
        // Supremum approached only from the left.
        let sup =
            PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (0.9, 0.9), (0.9, 0.0), (1.0, 0.0)])
                .unwrap();
        assert_eq!(sup.argmax_vertex(0.0), 1);
    }

    #[test]
    fn induce_examples() {
        let r = example_two();
        let curve = r.curve();
        assert_eq!(
            curve.induce(&QuantileIntervalSet::empty(), 1.0).unwrap(),
            *curve
        );

        let ironing = QuantileIntervalSet::new(vec![(0.1, 1.0)]).unwrap();
        let induced = curve.induce(&ironing, 1.0).unwrap();
        assert!((induced.evaluate(0.55).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(induced.evaluate(1.0).unwrap(), 1.0);

        let zero = curve.induce(&ironing, 0.0).unwrap();
        for i in 0..=20 {
            assert_eq!(zero.evaluate(i as f64 / 20.0).unwrap(), 0.0);
        }

        let tent =
            PiecewiseLinearCurve::from_points(&[(0.0, 0.0), (0.4, 1.0), (1.0, 0.2)]).unwrap();
        let plateau = tent.induce(&QuantileIntervalSet::empty(), 0.4).unwrap();
        assert_eq!(plateau.evaluate(0.9).unwrap(), 1.0);
        assert_eq!(plateau.evaluate(0.2).unwrap(), 0.5);
    }

    #[test]
    fn gap_and_csv() {
        let a = example_two().into_curve();
        assert_eq!(a.pointwise_gap(&a), 0.0);
        let shifted = PiecewiseLinearCurve::new(
            a.vertices()
                .iter()
                .map(|v| Vertex::new(v.q, v.value + 0.25))
                .collect(),
        )
        .unwrap();
        assert_eq!(shifted.pointwise_gap(&a), 0.25);
        let csv = a.to_csv();
        assert!(csv.starts_with("q,value\n0,0\n"));
        assert_eq!(csv.lines().count(), 1 + a.vertices().len());
    }

    #[test]
    fn price_steps_handle_clamps_and_empty_steps() {
        let r = RevenueCurve::from_price_steps(&[
            (-0.2, 9.0),
            (-0.1, 4.0),
            (0.5, 2.0),
            (0.5, 1.0),
            (1.0, 0.5),
        ]);
        assert_eq!(
            pts(r.curve()),
            vec![(0.0, 0.0), (0.5, 2.0), (0.5, 0.5), (1.0, 1.0), (1.0, 0.5)]
        );
        assert_eq!(r.prices(), &[4.0, 4.0, 1.0, 1.0, 0.5]);
    }
}
