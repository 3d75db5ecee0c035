//! Deterministic SVG rendering of a run.

use std::fmt::Write;

use crate::geometry::{Aabb, Point2, Shape};
use crate::scenario::Scenario;
use crate::trace::Trace;

const CANVAS: f64 = 800.0;
const MARGIN: f64 = 20.0;

struct View {
    bounds: Aabb,
    scale: f64,
}

impl View {
    fn new(bounds: Aabb) -> Self {
        let span = bounds.width().max(bounds.height());
        Self {
            bounds,
            scale: CANVAS / span,
        }
    }

    fn px(&self, p: Point2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.bounds.min.x) * self.scale,
            MARGIN + (self.bounds.max.y - p.y) * self.scale,
        )
    }

    fn len(&self, d: f64) -> f64 {
        d * self.scale
    }

    fn points(&self, pts: &[Point2]) -> String {
        let mut out = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.px(*p);
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{x:.3},{y:.3}").unwrap();
        }
        out
    }

    fn shape(&self, out: &mut String, shape: &Shape, style: &str) {
        match shape {
            Shape::Circle { center, radius } => {
                let (x, y) = self.px(*center);
                let r = self.len(*radius).max(1.5);
                writeln!(
                    out,
                    r#"<circle cx="{x:.3}" cy="{y:.3}" r="{r:.3}" {style}/>"#
                )
                .unwrap();
            }
            Shape::Polygon { vertices } => {
                writeln!(
                    out,
                    r#"<polygon points="{}" {style}/>"#,
                    self.points(vertices)
                )
                .unwrap();
            }
            Shape::Capsule { a, b, radius } => {
                let (x1, y1) = self.px(*a);
                let (x2, y2) = self.px(*b);
                let w = (2.0 * self.len(*radius)).max(1.5);
                writeln!(
                    out,
                    r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke-width="{w:.3}" stroke-linecap="round" {style}/>"#
                )
                .unwrap();
            }
        }
    }
}

/// Renders bounds, obstacles, start and goal, the goal-frame trajectory and
/// the final body pose. Output bytes depend only on the inputs.
pub fn export_svg(trace: &Trace, scenario: &Scenario) -> String {
    let view = View::new(scenario.scene.bounds);
    let w = 2.0 * MARGIN + view.len(scenario.scene.bounds.width());
    let h = 2.0 * MARGIN + view.len(scenario.scene.bounds.height());
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", escape(&scenario.name)).unwrap();

    let b = scenario.scene.bounds;
    let (x0, y0) = view.px(Point2::new(b.min.x, b.max.y));
    writeln!(
        out,
        r##"<rect id="bounds" x="{x0:.3}" y="{y0:.3}" width="{:.3}" height="{:.3}" fill="#ffffff" stroke="#333333"/>"##,
        view.len(b.width()),
        view.len(b.height())
    )
    .unwrap();

    out.push_str("<g id=\"obstacles\">\n");
    for o in &scenario.scene.obstacles {
        view.shape(&mut out, o, r##"fill="#9e9e9e" stroke="#555555""##);
    }
    out.push_str("</g>\n");

    let mut path = Vec::with_capacity(trace.records.len() + 1);
    path.push(trace.header.initial.goal_frame);
    // Drop samples closer than half a pixel to the last kept one.
    let min_step = 0.5 / view.scale;
    let n = trace.records.len();
    for (i, r) in trace.records.iter().enumerate() {
        let p = r.state.goal_frame;
        if i + 1 == n || p.distance(*path.last().unwrap()) >= min_step {
            path.push(p);
        }
    }
    writeln!(
        out,
        r##"<polyline id="trajectory" points="{}" fill="none" stroke="#1e64c8" stroke-width="2"/>"##,
        view.points(&path)
    )
    .unwrap();

    let final_q = trace
        .records
        .last()
        .map(|r| r.state.q.as_slice())
        .unwrap_or(&trace.header.initial.q);
    if let Ok(body) = scenario.model.kinematic_model().forward_kinematics(final_q) {
        out.push_str("<g id=\"body\">\n");
        for s in &body.shapes {
            view.shape(
                &mut out,
                s,
                r##"fill="#f0a030" stroke="#a05000" fill-opacity="0.6""##,
            );
        }
        out.push_str("</g>\n");
    }

    let (sx, sy) = view.px(trace.header.initial.goal_frame);
    writeln!(
        out,
        r##"<circle id="start" cx="{sx:.3}" cy="{sy:.3}" r="5" fill="#2e7d32"/>"##
    )
    .unwrap();
    let goal = &scenario.scene.goal;
    let (gx, gy) = view.px(goal.point);
    let gr = view.len(goal.epsilon).max(5.0);
    writeln!(
        out,
        r##"<circle id="goal" cx="{gx:.3}" cy="{gy:.3}" r="{gr:.3}" fill="none" stroke="#c62828" stroke-width="2"/>"##
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
