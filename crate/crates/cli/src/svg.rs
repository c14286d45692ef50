//! Minimal deterministic SVG rendering of snapshot geometry: overlaid
//! closed curves (circle backend) or meridian sections (polar backend),
//! shaded from light gray (early) to dark blue (late).

/// One curve with its time stamp; points in mathematical coordinates
/// (y up). `close` joins the last point back to the first.
pub struct Curve {
    pub t: f64,
    pub points: Vec<[f64; 2]>,
}

fn color_at(fraction: f64) -> String {
    // Linear ramp #c8c8c8 -> #1f4e79.
    let f = fraction.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(200.0, 31.0),
        lerp(200.0, 78.0),
        lerp(200.0, 121.0)
    )
}

/// Renders the curves into a standalone SVG document.
pub fn render(title: &str, curves: &[Curve], close: bool) -> String {
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for p in &c.points {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
    }
    if !(x0.is_finite() && y0.is_finite()) {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = 0.05 * (x1 - x0).max(y1 - y0).max(1e-12);
    let (x0, x1, y0, y1) = (x0 - pad, x1 + pad, y0 - pad, y1 + pad);
    let stroke = 0.004 * (x1 - x0).max(y1 - y0);

    let t0 = curves.first().map_or(0.0, |c| c.t);
    let t1 = curves.last().map_or(1.0, |c| c.t);
    let span = (t1 - t0).max(1e-300);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" \
         viewBox=\"{:.6} {:.6} {:.6} {:.6}\">\n",
        x0,
        -y1, // y is flipped below, so the box top is -max(y)
        x1 - x0,
        y1 - y0
    ));
    out.push_str(&format!("<title>{title}</title>\n"));
    out.push_str("<rect x=\"-1e9\" y=\"-1e9\" width=\"2e9\" height=\"2e9\" fill=\"white\"/>\n");
    for c in curves {
        let color = color_at((c.t - t0) / span);
        let tag = if close { "polygon" } else { "polyline" };
        let mut pts = String::new();
        for p in &c.points {
            pts.push_str(&format!("{:.6},{:.6} ", p[0], -p[1]));
        }
        out.push_str(&format!(
            "<{tag} points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{stroke:.6}\"/>\n",
            pts.trim_end()
        ));
    }
    out.push_str("</svg>\n");
    out
}
