//! Standalone SVG figures: line traces, histograms and heatmaps.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axes(s: &mut String, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - M,
        r = W - M
    );
    let _ = writeln!(s, r#"<text x="{M}" y="{}" text-anchor="start">{:.4}</text>"#, H - M + 16.0, x.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#, W - M, H - M + 16.0, x.1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#, M - 4.0, H - M, y.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#, M - 4.0, M + 4.0, y.1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn sx(x: f64, r: (f64, f64)) -> f64 {
    M + (x - r.0) / (r.1 - r.0) * (W - 2.0 * M)
}

fn sy(y: f64, r: (f64, f64)) -> f64 {
    H - M - (y - r.0) / (r.1 - r.0) * (H - 2.0 * M)
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64]) -> String {
    let mut s = header(title);
    let xr = range(xs.iter().copied());
    let yr = range(ys.iter().copied().chain([0.0]));
    axes(&mut s, xr, yr, xlabel, ylabel);
    let mut d = String::new();
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(x, xr), sy(y, yr));
    }
    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="1"/>"#, d.trim_end());
    s.push_str("</svg>\n");
    s
}

pub fn histogram(title: &str, xlabel: &str, values: &[f64], bins: usize, marker: Option<f64>) -> String {
    let bins = bins.max(1);
    let mut s = header(title);
    let xr = range(values.iter().copied().chain(marker));
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = (((v - xr.0) / (xr.1 - xr.0)) * bins as f64) as usize;
        counts[i.min(bins - 1)] += 1;
    }
    let yr = (0.0, counts.iter().copied().max().unwrap_or(1).max(1) as f64);
    axes(&mut s, xr, yr, xlabel, "count");
    let bw = (xr.1 - xr.0) / bins as f64;
    for (i, &c) in counts.iter().enumerate() {
        let x0 = sx(xr.0 + i as f64 * bw, xr);
        let x1 = sx(xr.0 + (i + 1) as f64 * bw, xr);
        let y = sy(c as f64, yr);
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="steelblue" stroke="white"/>"#,
            (x1 - x0).max(0.0),
            (H - M - y).max(0.0)
        );
    }
    if let Some(m) = marker {
        let x = sx(m, xr);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{M}" x2="{x:.2}" y2="{}" stroke="crimson" stroke-dasharray="4 3"/>"#, H - M);
    }
    s.push_str("</svg>\n");
    s
}

/// Row-major `n × n` grid, row 0 drawn at the bottom.
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, values: &[f64], n: usize) -> String {
    let mut s = header(title);
    axes(&mut s, (0.0, 1.0), (0.0, 1.0), xlabel, ylabel);
    let (lo, hi) = range(values.iter().copied());
    let (cw, ch) = ((W - 2.0 * M) / n as f64, (H - 2.0 * M) / n as f64);
    for (idx, &v) in values.iter().enumerate().take(n * n) {
        let (i, j) = (idx % n, idx / n);
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        let c = (255.0 * (1.0 - t)).round() as u8;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({c},{c},255)"/>"#,
            M + i as f64 * cw,
            H - M - (j + 1) as f64 * ch,
            cw + 0.05,
            ch + 0.05
        );
    }
    s.push_str("</svg>\n");
    s
}
