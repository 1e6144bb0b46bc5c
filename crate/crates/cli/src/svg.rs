//! SVG rendering of 2-D shield slices.
//!
//! The slice is rasterized at an explicit resolution by sampling pixel
//! centres. Every maximal run of equal labels within a raster row becomes
//! one rectangle, merged with identical runs in the rows below. Grid and
//! tree shields with the same labels therefore render to identical
//! documents.

use std::fmt::Write as _;

use gridshield::shield::ShieldRepr;
use gridshield::ActionSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvgError {
    #[error("the plot axes must differ")]
    SameAxis,
    #[error("axis {0} does not exist")]
    NoSuchAxis(usize),
    #[error("axis `{0}` is neither plotted nor pinned")]
    Unpinned(String),
    #[error("resolution must be at least 1x1, got {0}x{1}")]
    Resolution(u32, u32),
}

/// Which slice to draw: axis `x` horizontally, axis `y` vertically, every
/// other axis pinned to a value, sampled on `width` by `height` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub x: usize,
    pub y: usize,
    /// One entry per axis; entries for `x` and `y` are ignored.
    pub pinned: Vec<Option<f64>>,
    pub width: u32,
    pub height: u32,
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 480.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 20.0;
const LEGEND_W: f64 = 220.0;
const BOTTOM: f64 = 50.0;

/// Fill colour for an action set; `None` marks points outside the domain.
pub fn color(set: Option<ActionSet>) -> String {
    match set {
        None => "#ffffff".into(),
        Some(ActionSet(0)) => "#c0392b".into(),
        Some(ActionSet(mask)) => {
            // Golden-angle hues keep neighbouring masks apart.
            let hue = (mask as f64 * 137.507_764).rem_euclid(360.0).round() as u32;
            format!("hsl({hue},55%,60%)")
        }
    }
}

fn coordinate(repr: &ShieldRepr, axis: usize, i: u32, n: u32) -> f64 {
    let a = &repr.axes()[axis];
    let (lo, hi) = a.bounds();
    let x = lo + (i as f64 + 0.5) * (hi - lo) / n as f64;
    if a.is_discrete() {
        x.floor()
    } else {
        x
    }
}

/// Labels of the slice, row by row from the top (highest `y`) down.
pub fn rasterize(repr: &ShieldRepr, slice: &Slice) -> Result<Vec<Option<ActionSet>>, SvgError> {
    let axes = repr.axes();
    for &a in &[slice.x, slice.y] {
        if a >= axes.len() {
            return Err(SvgError::NoSuchAxis(a));
        }
    }
    if slice.x == slice.y {
        return Err(SvgError::SameAxis);
    }
    if slice.width == 0 || slice.height == 0 {
        return Err(SvgError::Resolution(slice.width, slice.height));
    }
    let mut point = vec![0.0; axes.len()];
    for (d, axis) in axes.iter().enumerate() {
        if d != slice.x && d != slice.y {
            point[d] = slice
                .pinned
                .get(d)
                .copied()
                .flatten()
                .ok_or_else(|| SvgError::Unpinned(axis.name.clone()))?;
        }
    }
    let mut out = Vec::with_capacity(slice.width as usize * slice.height as usize);
    for row in 0..slice.height {
        point[slice.y] = coordinate(repr, slice.y, slice.height - 1 - row, slice.height);
        for col in 0..slice.width {
            point[slice.x] = coordinate(repr, slice.x, col, slice.width);
            out.push(repr.label_at_point(&point));
        }
    }
    Ok(out)
}

/// A rectangle of equal labels in raster coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub label: Option<ActionSet>,
}

/// Maximal same-label runs of each raster row. A run that repeats the one
/// directly above it (same columns, same label) extends that rectangle
/// downwards instead of starting a new one.
pub fn runs(labels: &[Option<ActionSet>], width: usize) -> Vec<Run> {
    let mut done = Vec::new();
    let mut open: Vec<Run> = Vec::new();
    for (row, line) in labels.chunks(width).enumerate() {
        let mut next = Vec::new();
        let mut col = 0;
        let mut above = open.into_iter().peekable();
        for chunk in line.chunk_by(|a, b| a == b) {
            while above.peek().is_some_and(|r| r.x < col) {
                done.extend(above.next());
            }
            match above.next_if(|r| r.x == col && r.width == chunk.len() && r.label == chunk[0]) {
                Some(mut r) => {
                    r.height += 1;
                    next.push(r);
                }
                None => next.push(Run {
                    x: col,
                    y: row,
                    width: chunk.len(),
                    height: 1,
                    label: chunk[0],
                }),
            }
            col += chunk.len();
        }
        done.extend(above);
        open = next;
    }
    done.extend(open);
    done.sort_by_key(|r| (r.y, r.x));
    done
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn describe(set: Option<ActionSet>, names: &[String]) -> String {
    match set {
        None => "outside the domain".into(),
        Some(ActionSet(0)) => "no action (unsafe)".into(),
        Some(s) => s.iter().map(|a| names[a.index()].as_str()).collect::<Vec<_>>().join(", "),
    }
}

/// Renders the slice with axis labels and a legend of the labels present.
pub fn render(repr: &ShieldRepr, slice: &Slice) -> Result<String, SvgError> {
    let labels = rasterize(repr, slice)?;
    let axes = repr.axes();
    let (w, h) = (slice.width as usize, slice.height as usize);
    let total_w = LEFT + PLOT_W + LEGEND_W;
    let total_h = TOP + PLOT_H + BOTTOM;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{total_w}" height="{total_h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<svg x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {w} {h}" preserveAspectRatio="none" shape-rendering="crispEdges">"#
    );
    for r in runs(&labels, w) {
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            r.x,
            r.y,
            r.width,
            r.height,
            color(r.label)
        );
    }
    svg.push_str("</svg>\n");
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="black"/>"#
    );

    let (xlo, xhi) = axes[slice.x].bounds();
    let (ylo, yhi) = axes[slice.y].bounds();
    let base = TOP + PLOT_H;
    let right = LEFT + PLOT_W;
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{}" text-anchor="start">{xlo}</text>"#, base + 16.0);
    let _ = writeln!(svg, r#"<text x="{right}" y="{}" text-anchor="end">{xhi}</text>"#, base + 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        base + 36.0,
        escape(&axes[slice.x].name)
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{base}" text-anchor="end">{ylo}</text>"#, LEFT - 6.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{yhi}</text>"#, LEFT - 6.0, TOP + 12.0);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
        LEFT - 40.0,
        TOP + PLOT_H / 2.0,
        LEFT - 40.0,
        TOP + PLOT_H / 2.0,
        escape(&axes[slice.y].name)
    );

    let mut present: Vec<Option<ActionSet>> = labels.clone();
    present.sort_unstable();
    present.dedup();
    let lx = right + 20.0;
    for (i, set) in present.iter().enumerate() {
        let y = TOP + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{y}" width="14" height="14" fill="{}" stroke="black"/>"#,
            color(*set)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            y + 11.0,
            escape(&describe(*set, repr.actions()))
        );
    }
    let pins: Vec<String> = axes
        .iter()
        .enumerate()
        .filter(|&(d, _)| d != slice.x && d != slice.y)
        .map(|(d, a)| format!("{} = {}", a.name, slice.pinned[d].expect("checked while rasterizing")))
        .collect();
    if !pins.is_empty() {
        let y = TOP + 20.0 * present.len() as f64 + 10.0;
        let _ = writeln!(svg, r#"<text x="{lx}" y="{y}">{}</text>"#, escape(&pins.join(", ")));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use gridshield::{Axis, GridSpec, ShieldGrid};

    use super::*;

    fn uniform() -> ShieldRepr {
        let grid = GridSpec::new(vec![Axis::continuous("x", 0.0, 1.0, 3), Axis::continuous("y", 0.0, 1.0, 2)]).unwrap();
        ShieldRepr::Grid(ShieldGrid::new(grid, vec!["a".into(), "b".into()], vec![ActionSet(3); 6]).unwrap())
    }

    #[test]
    fn uniform_shield_is_one_rectangle() {
        let slice = Slice {
            x: 0,
            y: 1,
            pinned: vec![None, None],
            width: 30,
            height: 20,
        };
        let svg = render(&uniform(), &slice).unwrap();
        assert_eq!(svg.matches("<rect x=\"0\" y=\"0\" width=\"30\" height=\"20\"").count(), 1);
        assert_eq!(svg.matches("hsl(").count(), 2, "one plot rectangle and one legend swatch");
        assert!(svg.contains(">a, b</text>"));
    }

    #[test]
    fn runs_merge_vertically() {
        let (a, b) = (Some(ActionSet(1)), Some(ActionSet(2)));
        #[rustfmt::skip]
        let labels = [
            a, a, b,
            a, a, b,
            a, b, b,
        ];
        let got: Vec<(usize, usize, usize, usize)> = runs(&labels, 3).iter().map(|r| (r.x, r.y, r.width, r.height)).collect();
        assert_eq!(got, vec![(0, 0, 2, 2), (2, 0, 1, 2), (0, 2, 1, 1), (1, 2, 2, 1)]);
    }

    #[test]
    fn argument_errors() {
        let base = Slice {
            x: 0,
            y: 1,
            pinned: vec![None, None],
            width: 3,
            height: 2,
        };
        let s = uniform();
        assert_eq!(render(&s, &Slice { y: 0, ..base.clone() }), Err(SvgError::SameAxis));
        assert_eq!(render(&s, &Slice { y: 2, ..base.clone() }), Err(SvgError::NoSuchAxis(2)));
        assert_eq!(render(&s, &Slice { width: 0, ..base }), Err(SvgError::Resolution(0, 2)));
    }

    #[test]
    fn unpinned_axis_is_rejected() {
        let grid = GridSpec::new(vec![
            Axis::continuous("x", 0.0, 1.0, 2),
            Axis::continuous("y", 0.0, 1.0, 2),
            Axis::discrete("loc", 2),
        ])
        .unwrap();
        let s = ShieldRepr::Grid(ShieldGrid::new(grid, vec!["a".into()], vec![ActionSet(1); 8]).unwrap());
        let slice = Slice {
            x: 0,
            y: 1,
            pinned: vec![None, None, None],
            width: 2,
            height: 2,
        };
        assert_eq!(render(&s, &slice), Err(SvgError::Unpinned("loc".into())));
        let pinned = Slice {
            pinned: vec![None, None, Some(1.0)],
            ..slice
        };
        assert!(render(&s, &pinned).unwrap().contains("loc = 1"));
    }

    #[test]
    fn colors_are_fixed() {
        assert_eq!(color(Some(ActionSet(0))), "#c0392b");
        assert_eq!(color(Some(ActionSet(1))), "hsl(138,55%,60%)");
        assert_ne!(color(Some(ActionSet(2))), color(Some(ActionSet(3))));
    }
}
