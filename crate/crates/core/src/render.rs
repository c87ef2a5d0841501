//! SVG snapshots of a forest: every edge as a thin segment, the paths from a band of
//! starting abscissae in a heavier stroke, and Boolean grains as translucent discs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::dsf::{trace_path, Forest, DEFAULT_MAX_STEPS};
use crate::error::{Error, Result};
use crate::point_process::{BooleanModel, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    /// Paths start at every point whose abscissa lies in this closed interval.
    pub highlight_x: Option<(f64, f64)>,
    /// Output width in pixels; the height follows the window's aspect ratio.
    pub width_px: f64,
    pub edge_stroke: f64,
    pub path_stroke: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            highlight_x: None,
            width_px: 800.0,
            edge_stroke: 0.6,
            path_stroke: 2.0,
        }
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Renders the forest over its window.
pub fn render_forest(
    forest: &Forest,
    spec: &RenderSpec,
    grains: Option<&BooleanModel>,
) -> Result<String> {
    if !(spec.width_px.is_finite() && spec.width_px > 0.0) {
        return Err(Error::Parameter(format!(
            "width must be positive, got {}",
            spec.width_px
        )));
    }
    if !(spec.edge_stroke > 0.0 && spec.path_stroke > 0.0) {
        return Err(Error::Parameter("stroke widths must be positive".into()));
    }
    let w = *forest.source().window();
    let scale = spec.width_px / w.width();
    let height_px = w.height() * scale;
    let sx = |p: Point| num((p.x - w.x_min) * scale);
    let sy = |p: Point| num((w.y_max - p.y) * scale);
    let pts = forest.points();

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{0}" height="{1}" viewBox="0 0 {0} {1}">"#,
        num(spec.width_px),
        num(height_px)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        num(spec.width_px),
        num(height_px)
    );

    if let Some(model) = grains {
        let _ = writeln!(
            svg,
            r##"<g id="grains" fill="#3b7dd8" fill-opacity="0.25" stroke="none">"##
        );
        for &g in &model.germs {
            let _ = writeln!(
                svg,
                r#"<circle cx="{}" cy="{}" r="{}"/>"#,
                sx(g),
                sy(g),
                num(model.radius * scale)
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    let _ = writeln!(
        svg,
        r##"<g id="edges" stroke="#555555" stroke-width="{}" stroke-linecap="round">"##,
        num(spec.edge_stroke)
    );
    for (c, p) in forest.edges() {
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            sx(pts[c]),
            sy(pts[c]),
            sx(pts[p]),
            sy(pts[p])
        );
    }
    let _ = writeln!(svg, "</g>");

    if let Some((lo, hi)) = spec.highlight_x {
        // Coalesced paths share edges; each edge is drawn once.
        let mut highlighted = BTreeSet::new();
        for (i, p) in pts.iter().enumerate() {
            if p.x < lo || p.x > hi {
                continue;
            }
            let path = trace_path(forest, i, DEFAULT_MAX_STEPS)?;
            for pair in path.vertices.windows(2) {
                if !highlighted.insert(pair[0]) {
                    break;
                }
            }
        }
        let _ = writeln!(
            svg,
            r##"<g id="paths" stroke="#c0392b" stroke-width="{}" stroke-linecap="round">"##,
            num(spec.path_stroke)
        );
        for c in highlighted {
            let p = forest.parent(c).expect("highlighted edges have parents");
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                sx(pts[c]),
                sy(pts[c]),
                sx(pts[p]),
                sy(pts[p])
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsf::build_dsf;
    use crate::point_process::{sample_boolean, sample_ppp, PointSet, Window};

    fn window() -> Window {
        Window::new(0.0, 10.0, 0.0, 10.0).unwrap()
    }

    #[test]
    fn empty_forest_is_blank_canvas() {
        let f = build_dsf(PointSet::from_points(window(), &[]).unwrap());
        let svg = render_forest(&f, &RenderSpec::default(), None).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<line").count(), 0);
        assert_eq!(svg.matches("<path").count(), 0);
    }

    #[test]
    fn chain_has_two_segments() {
        let f = build_dsf(
            PointSet::from_points(window(), &[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)]).unwrap(),
        );
        let svg = render_forest(&f, &RenderSpec::default(), None).unwrap();
        assert_eq!(svg.matches("<line").count(), 2);
    }

    #[test]
    fn highlighted_edges_are_drawn_once() {
        let f = build_dsf(
            PointSet::from_points(window(), &[(1.0, 5.0), (1.0, 6.0), (2.0, 5.5), (3.0, 5.5)])
                .unwrap(),
        );
        let spec = RenderSpec {
            highlight_x: Some((0.0, 1.5)),
            ..RenderSpec::default()
        };
        let svg = render_forest(&f, &spec, None).unwrap();
        let paths = &svg[svg.find(r#"<g id="paths""#).unwrap()..];
        assert_eq!(paths.matches("<line").count(), 3);
    }

    #[test]
    fn ordinates_are_flipped() {
        let f = build_dsf(
            PointSet::from_points(window(), &[(0.0, 10.0 - 1e-9), (10.0 - 1e-9, 0.0)]).unwrap(),
        );
        let spec = RenderSpec {
            width_px: 100.0,
            ..RenderSpec::default()
        };
        let svg = render_forest(&f, &spec, None).unwrap();
        assert!(
            svg.contains(r#"<line x1="0" y1="0" x2="100" y2="100"/>"#),
            "{svg}"
        );
    }

    #[test]
    fn grains_are_discs() {
        let w = window();
        let pts = sample_ppp(w, 1.0, 1).unwrap();
        let holes = sample_boolean(w, 0.2, 1.0, 2).unwrap();
        let f = build_dsf(pts);
        let svg = render_forest(&f, &RenderSpec::default(), Some(&holes)).unwrap();
        assert_eq!(svg.matches("<circle").count(), holes.germs.len());
        assert_eq!(svg.matches("<line").count(), f.edges().count());
    }

    #[test]
    fn rejects_bad_render_spec() {
        let f = build_dsf(PointSet::from_points(window(), &[]).unwrap());
        let spec = RenderSpec {
            width_px: 0.0,
            ..RenderSpec::default()
        };
        assert!(render_forest(&f, &spec, None).is_err());
    }
}
