//! Hand-rolled SVG figures. Numbers are written with fixed precision so a
//! rerun of the same config produces byte-identical files.

use std::fmt::Write as _;

use landmark_maxent::geometry::AngleHistogram;

const PALETTE: [&str; 8] =
    ["#1f78b4", "#e31a1c", "#33a02c", "#ff7f00", "#6a3d9a", "#b15928", "#a6cee3", "#636363"];

fn f(x: f64) -> String {
    format!("{x:.2}")
}

/// Overlaid ROC curves with a legend listing each model's area.
pub fn roc_overlay(curves: &[(String, f64, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 520.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let x = |fpr: f64| ml + fpr * pw;
    let y = |tpr: f64| mt + (1.0 - tpr) * ph;

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    );
    let _ = write!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n");
    // Frame, gridlines, tick labels.
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            f(x(t)),
            f(y(0.0)),
            f(x(t)),
            f(y(1.0))
        );
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            f(x(0.0)),
            f(y(t)),
            f(x(1.0)),
            f(y(t))
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{t:.2}</text>\n",
            f(x(t)),
            f(h - mb + 20.0)
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t:.2}</text>\n",
            f(ml - 8.0),
            f(y(t) + 4.0)
        );
    }
    let _ = write!(
        s,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        f(ml),
        f(mt),
        f(pw),
        f(ph)
    );
    let _ = write!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\" \
         stroke-dasharray=\"5,5\"/>\n",
        f(x(0.0)),
        f(y(0.0)),
        f(x(1.0)),
        f(y(1.0))
    );
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">false positive rate</text>\n",
        f(ml + pw / 2.0),
        f(h - 10.0)
    );
    let _ = write!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">\
         true positive rate</text>\n",
        f(mt + ph / 2.0),
        f(mt + ph / 2.0)
    );

    for (k, (_, _, points)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> =
            points.iter().map(|&(fpr, tpr)| format!("{},{}", f(x(fpr)), f(y(tpr)))).collect();
        let _ = write!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            path.join(" ")
        );
    }
    // Legend: best model on top, inside the lower-right corner.
    let lx = ml + pw - 230.0;
    let mut ly = mt + ph - 18.0 * curves.len() as f64 - 12.0;
    for (k, (tag, auroc, _)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" \
             stroke-width=\"3\"/>\n",
            f(lx),
            f(ly - 4.0),
            f(lx + 26.0),
            f(ly - 4.0)
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\">{tag} (auROC {auroc:.3})</text>\n",
            f(lx + 34.0),
            f(ly)
        );
        ly += 18.0;
    }
    s.push_str("</svg>\n");
    s
}

/// Landmark coupling diagram: segments between landmark pairs, width
/// proportional to coupling magnitude, drawn only where the coupling is
/// significant (t > 1). Red: positive tendency (-J > 0); blue: negative.
pub fn coupling_diagram(
    positions: &[[f64; 2]],
    coupling_signed: &nalgebra::DMatrix<f64>,
    t: &nalgebra::DMatrix<f64>,
    title: &str,
) -> String {
    let (w, h) = (560.0, 560.0);
    let margin = 70.0;
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in positions {
        x_lo = x_lo.min(p[0]);
        x_hi = x_hi.max(p[0]);
        y_lo = y_lo.min(p[1]);
        y_hi = y_hi.max(p[1]);
    }
    let span = (x_hi - x_lo).max(y_hi - y_lo).max(1e-9);
    let scale = (w - 2.0 * margin) / span;
    // SVG y grows downward; flip so the figure matches the data plane.
    let sx = |p: f64| margin + (p - x_lo) * scale;
    let sy = |p: f64| h - margin - (p - y_lo) * scale;

    let n = positions.len();
    let max_abs = coupling_signed
        .iter()
        .cloned()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(1e-12);

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    );
    let _ = write!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n");
    let _ = write!(s, "<text x=\"{}\" y=\"28\" text-anchor=\"middle\">{title}</text>\n", f(w / 2.0));
    for i in 0..n {
        for j in (i + 1)..n {
            if t[(i, j)] <= 1.0 {
                continue;
            }
            let value = coupling_signed[(i, j)];
            // Sign display follows the positive-tendency convention -J.
            let color = if -value > 0.0 { "#e31a1c" } else { "#1f78b4" };
            let width = 0.6 + 6.0 * value.abs() / max_abs;
            let _ = write!(
                s,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" \
                 stroke-width=\"{}\" stroke-opacity=\"0.85\"/>\n",
                f(sx(positions[i][0])),
                f(sy(positions[i][1])),
                f(sx(positions[j][0])),
                f(sy(positions[j][1])),
                f(width)
            );
        }
    }
    for (k, p) in positions.iter().enumerate() {
        let _ = write!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"7\" fill=\"#333\"/>\n",
            f(sx(p[0])),
            f(sy(p[1]))
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#333\">{k}</text>\n",
            f(sx(p[0])),
            f(sy(p[1]) - 12.0)
        );
    }
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\">red: positive tendency, blue: negative; \
         width = coupling size; only t &gt; 1 shown</text>\n",
        f(margin),
        f(h - 18.0)
    );
    s.push_str("</svg>\n");
    s
}

/// Per-landmark angle histograms as a row of bar panels.
pub fn angle_panels(histograms: &[(usize, AngleHistogram)]) -> String {
    let cols = 4usize;
    let rows = histograms.len().div_ceil(cols);
    let (pw, ph) = (150.0, 130.0);
    let w = pw * cols as f64 + 40.0;
    let h = ph * rows as f64 + 40.0;
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = write!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n");
    for (panel, (landmark, hist)) in histograms.iter().enumerate() {
        let px = 20.0 + (panel % cols) as f64 * pw;
        let py = 20.0 + (panel / cols) as f64 * ph;
        let peak = hist.counts.iter().cloned().max().unwrap_or(1).max(1) as f64;
        let bw = (pw - 30.0) / hist.counts.len() as f64;
        for (b, &count) in hist.counts.iter().enumerate() {
            let bar = (ph - 50.0) * count as f64 / peak;
            let _ = write!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#1f78b4\"/>\n",
                f(px + 10.0 + b as f64 * bw),
                f(py + ph - 30.0 - bar),
                f(bw.max(1.5) - 0.5),
                f(bar)
            );
        }
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
            f(px + 10.0),
            f(py + ph - 30.0),
            f(px + pw - 20.0),
            f(py + ph - 30.0)
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">landmark {landmark} \
             (n={})</text>\n",
            f(px + pw / 2.0 - 5.0),
            f(py + ph - 12.0),
            hist.n
        );
    }
    s.push_str("</svg>\n");
    s
}
