use std::fmt::Write as _;

use super::EpisodeResult;
use crate::world::Scene;

const SIZE: f64 = 500.0;
const STAGE_COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG 1.1 drawing of the scene's first two axes with every episode's
/// gripper path: one dot per executed step, colored by the active stage.
pub fn plot_trajectories(episodes: &[&EpisodeResult], scene: &Scene) -> String {
    let (lo, hi) = (&scene.bounds.lo, &scene.bounds.hi);
    let sx = |x: f64| (x - lo[0]) / (hi[0] - lo[0]) * SIZE;
    // SVG y grows downward.
    let sy = |y: f64| (1.0 - (y - lo[1]) / (hi[1] - lo[1])) * SIZE;
    let scale = SIZE / (hi[0] - lo[0]);
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="#fafafa" stroke="#333"/>"##);
    let _ = writeln!(out, r#"<g id="zones">"#);
    for z in &scene.zones {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#dfd" stroke="#484"><title>{}</title></circle>"##,
            sx(z.center[0]),
            sy(z.center[1]),
            z.radius * scale,
            escape(&z.label)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g id="parts">"#);
    for p in &scene.parts {
        let (a, b, h) = (p.at_joint(0.0), p.at_joint(1.0), p.handle());
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-width="3"/>"##,
            sx(a[0]),
            sy(a[1]),
            sx(b[0]),
            sy(b[1])
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="#666"><title>{}</title></rect>"##,
            sx(h[0]) - 5.0,
            sy(h[1]) - 5.0,
            escape(&p.label)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g id="objects">"#);
    for o in &scene.objects {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="14" height="14" fill="#c9a" stroke="#000"><title>{}</title></rect>"##,
            sx(o.position[0]) - 7.0,
            sy(o.position[1]) - 7.0,
            escape(&o.label)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g id="paths">"#);
    for (i, e) in episodes.iter().enumerate() {
        let _ = writeln!(out, r#"<g class="episode" data-index="{i}">"#);
        let steps_per_chunk = if e.chunks == 0 { 0 } else { e.path.len() / e.chunks };
        for (k, p) in e.path.iter().enumerate() {
            let stage = if steps_per_chunk == 0 {
                1
            } else {
                e.trace.get(k / steps_per_chunk).map_or(1, |r| r.stage)
            };
            let color = STAGE_COLORS[(stage.max(1) - 1) % STAGE_COLORS.len()];
            let _ = writeln!(
                out,
                r#"<circle class="step" cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                sx(p[0]),
                sy(p[1])
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}
