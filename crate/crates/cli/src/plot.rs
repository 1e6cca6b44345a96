//! Hand-written SVG of the first two state coordinates.

use std::fmt::Write as _;

use safeguard_core::runtime::{StepOutcome, TrajectoryLog};
use safeguard_core::sets::{Hypercube, UnsafeRegion};

const SIZE: f64 = 640.0;
const PAD: f64 = 20.0;

struct Frame {
    lo: [f64; 2],
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(x_set: &Hypercube) -> Self {
        let (w, h) = (x_set.hi()[0] - x_set.lo()[0], x_set.hi()[1] - x_set.lo()[1]);
        let scale = (SIZE - 2.0 * PAD) / w.max(h).max(1e-9);
        Self {
            lo: [x_set.lo()[0], x_set.lo()[1]],
            scale,
            height: h * scale + 2.0 * PAD,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            PAD + (x - self.lo[0]) * self.scale,
            self.height - PAD - (y - self.lo[1]) * self.scale,
        )
    }

    fn rect(&self, b: &Hypercube, style: &str) -> String {
        let (x0, y1) = self.px(b.lo()[0], b.lo()[1]);
        let (x1, y0) = self.px(b.hi()[0], b.hi()[1]);
        format!(
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
            (x1 - x0).max(0.0),
            (y1 - y0).max(0.0)
        )
    }
}

/// Obstacles as filled boxes, waypoints, safe boxes and actual states.
pub fn render(x_set: &Hypercube, region: &UnsafeRegion, waypoints: &[Vec<f64>], log: &TrajectoryLog) -> String {
    let f = Frame::new(x_set);
    let width = (x_set.hi()[0] - x_set.lo()[0]) * f.scale + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{:.0}" viewBox="0 0 {width:.2} {:.2}">"#,
        f.height, f.height
    );
    let _ = writeln!(s, "{}", f.rect(x_set, r#"fill="white" stroke="black""#));
    for b in region.boxes() {
        let _ = writeln!(s, "{}", f.rect(&b.project(0..2), r##"fill="#999" stroke="#555""##));
    }
    for st in &log.steps {
        if let StepOutcome::Optimal { safe_box, .. } = &st.outcome {
            let _ = writeln!(
                s,
                "{}",
                f.rect(&safe_box.project(0..2), r#"fill="none" stroke="green" stroke-width="0.8""#)
            );
        }
    }
    if !waypoints.is_empty() {
        let pts: Vec<String> = waypoints
            .iter()
            .map(|w| {
                let (x, y) = f.px(w[0], w[1]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="red" stroke-dasharray="4 3"/>"#,
            pts.join(" ")
        );
        for w in waypoints {
            let (x, y) = f.px(w[0], w[1]);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="red"/>"#);
        }
    }
    let states = log.steps.iter().map(|st| &st.x).chain(std::iter::once(&log.final_state));
    for x in states {
        let (cx, cy) = f.px(x[0], x[1]);
        let _ = writeln!(
            s,
            r#"<path d="M{:.2} {cy:.2}H{:.2}M{cx:.2} {:.2}V{:.2}" stroke="blue" stroke-width="1.2"/>"#,
            cx - 3.0,
            cx + 3.0,
            cy - 3.0,
            cy + 3.0
        );
    }
    s.push_str("</svg>\n");
    s
}
