//! Mollweide plots of rotation distributions.
//!
//! A rotation is drawn at the Mollweide projection of its rotated z axis.
//! The remaining degree of freedom, the tilt about that axis, sets the hue,
//! and the probability mass sets the dot size. Samples falling on the same
//! pixel with the same hue bin are merged.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use nalgebra::{UnitQuaternion, Vector3};

pub const WIDTH: f64 = 880.0;
pub const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 20.0;
const HUE_BINS: u32 = 36;
const MIN_DOT: f64 = 1.0;
const MAX_DOT: f64 = 7.0;
/// Merged dots beyond this count (smallest mass first) are not drawn.
const MAX_DOTS: usize = 50_000;

/// Mollweide coordinates of a longitude/latitude pair, x in
/// `[-2 sqrt 2, 2 sqrt 2]`, y in `[-sqrt 2, sqrt 2]`.
pub fn mollweide(lon: f64, lat: f64) -> (f64, f64) {
    let target = PI * lat.sin();
    let theta = if (lat.abs() - PI / 2.0).abs() < 1e-12 {
        lat.signum() * PI / 2.0
    } else {
        let mut t = lat;
        for _ in 0..50 {
            let f = 2.0 * t + (2.0 * t).sin() - target;
            let d = 2.0 + 2.0 * (2.0 * t).cos();
            if d.abs() < 1e-15 {
                break;
            }
            let step = f / d;
            t -= step;
            if step.abs() < 1e-13 {
                break;
            }
        }
        t
    };
    (2.0 * SQRT_2 / PI * lon * theta.cos(), SQRT_2 * theta.sin())
}

/// Direction of the rotated z axis and the tilt about it in `[0, 2 pi)`.
/// The tilt is measured after undoing the shortest rotation taking z to
/// that axis.
pub fn axis_and_tilt(q: &UnitQuaternion<f64>) -> (Vector3<f64>, f64) {
    let axis = q * Vector3::z();
    let swing = UnitQuaternion::rotation_between(&Vector3::z(), &axis)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI));
    let x = swing.inverse() * (q * Vector3::x());
    (axis, x.y.atan2(x.x).rem_euclid(2.0 * PI))
}

/// SVG coordinates of a rotation's dot.
pub fn project(q: &UnitQuaternion<f64>) -> (f64, f64, f64) {
    let (axis, tilt) = axis_and_tilt(q);
    let lon = axis.y.atan2(axis.x);
    let lat = axis.z.clamp(-1.0, 1.0).asin();
    let (mx, my) = mollweide(lon, lat);
    let s = (WIDTH / 2.0 - MARGIN) / (2.0 * SQRT_2);
    (WIDTH / 2.0 + s * mx, HEIGHT / 2.0 - s * my, tilt)
}

fn hue(tilt: f64) -> f64 {
    tilt.to_degrees().rem_euclid(360.0)
}

/// SVG document for weighted rotations, with optional reference rotations
/// drawn as open circles.
pub fn mollweide_svg(samples: &[(UnitQuaternion<f64>, f64)], truths: &[UnitQuaternion<f64>]) -> String {
    let mut bins: BTreeMap<(i64, i64, u32), f64> = BTreeMap::new();
    for (q, p) in samples {
        let (x, y, tilt) = project(q);
        let bin = ((tilt / (2.0 * PI) * HUE_BINS as f64) as u32).min(HUE_BINS - 1);
        *bins.entry((x.round() as i64, y.round() as i64, bin)).or_default() += p;
    }
    let mut dots: Vec<((i64, i64, u32), f64)> = bins.into_iter().collect();
    // heaviest last so they draw on top; ties keep key order
    dots.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    if dots.len() > MAX_DOTS {
        dots.drain(..dots.len() - MAX_DOTS);
    }
    let max_p = dots.last().map_or(1.0, |d| d.1).max(f64::MIN_POSITIVE);

    let s = (WIDTH / 2.0 - MARGIN) / (2.0 * SQRT_2);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = WIDTH + 120.0,
        h = HEIGHT
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r##"<ellipse cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" fill="#f4f4f4" stroke="#444" stroke-width="1"/>"##,
        WIDTH / 2.0,
        HEIGHT / 2.0,
        2.0 * SQRT_2 * s,
        SQRT_2 * s
    )
    .unwrap();
    graticule(&mut svg);
    writeln!(svg, r#"<g id="samples">"#).unwrap();
    for ((x, y, bin), p) in &dots {
        let r = MIN_DOT + (MAX_DOT - MIN_DOT) * (p / max_p).sqrt();
        let h = (*bin as f64 + 0.5) * 360.0 / HUE_BINS as f64;
        writeln!(
            svg,
            r#"<circle cx="{x}" cy="{y}" r="{r:.2}" fill="hsl({h:.0},85%,45%)" fill-opacity="0.8"/>"#
        )
        .unwrap();
    }
    writeln!(svg, "</g>").unwrap();
    if !truths.is_empty() {
        writeln!(svg, r#"<g id="truth">"#).unwrap();
        for q in truths {
            let (x, y, tilt) = project(q);
            writeln!(
                svg,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="10" fill="none" stroke="hsl({:.0},85%,35%)" stroke-width="2"/>"#,
                hue(tilt)
            )
            .unwrap();
        }
        writeln!(svg, "</g>").unwrap();
    }
    color_wheel(&mut svg);
    svg.push_str("</svg>\n");
    svg
}

fn graticule(svg: &mut String) {
    let s = (WIDTH / 2.0 - MARGIN) / (2.0 * SQRT_2);
    let to_svg = |lon: f64, lat: f64| {
        let (x, y) = mollweide(lon, lat);
        (WIDTH / 2.0 + s * x, HEIGHT / 2.0 - s * y)
    };
    let mut path = String::new();
    for k in -5..=5 {
        let lon = k as f64 * PI / 6.0;
        for i in 0..=36 {
            let (x, y) = to_svg(lon, -PI / 2.0 + PI * i as f64 / 36.0);
            write!(path, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
    }
    for k in -2..=2 {
        let lat = k as f64 * PI / 6.0;
        for i in 0..=72 {
            let (x, y) = to_svg(-PI + 2.0 * PI * i as f64 / 72.0, lat);
            write!(path, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
    }
    writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#ccc" stroke-width="0.5"/>"##,
        path.trim_end()
    )
    .unwrap();
}

/// Legend: a ring of hues for tilt angles from 0 to 360 degrees.
fn color_wheel(svg: &mut String) {
    let (cx, cy, r) = (WIDTH + 60.0, HEIGHT / 2.0, 35.0);
    writeln!(svg, r#"<g id="tilt-legend">"#).unwrap();
    for i in 0..HUE_BINS {
        let a0 = 2.0 * PI * i as f64 / HUE_BINS as f64;
        let a1 = 2.0 * PI * (i + 1) as f64 / HUE_BINS as f64;
        let h = (i as f64 + 0.5) * 360.0 / HUE_BINS as f64;
        writeln!(
            svg,
            r#"<path d="M{:.2},{:.2} A{r},{r} 0 0,0 {:.2},{:.2}" stroke="hsl({h:.0},85%,45%)" stroke-width="10" fill="none"/>"#,
            cx + r * a0.cos(),
            cy - r * a0.sin(),
            cx + r * a1.cos(),
            cy - r * a1.sin()
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{cx}" y="{:.0}" font-family="sans-serif" font-size="12" text-anchor="middle">tilt</text>"#,
        cy + r + 25.0
    )
    .unwrap();
    writeln!(svg, "</g>").unwrap();
}
