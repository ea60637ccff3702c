//! SVG figures: influence heatmap, ranked influence distribution of one
//! target and the stability curves.

pub mod svg;

use crate::duplicates::DuplicateGroupMap;
use crate::influence::InfluenceMatrixOf;
use crate::stats::{ranked_distribution, StabilityRow};
use svg::{diverging, sequential, Svg};

const MARGIN: f64 = 40.0;

/// Heatmap of `I` with target rows and source columns. Off-diagonal cells
/// share a symmetric diverging scale centred at 0; the diagonal has its own
/// sequential scale so self-influence does not wash out the rest.
pub fn emit_heatmap(influence: &InfluenceMatrixOf<f64>, record_ids: &[u64]) -> String {
    let n = influence.n();
    let cell = (640.0 / n as f64).clamp(4.0, 40.0);
    let side = cell * n as f64;
    let mut off_max = 0.0f64;
    let mut diag_max = 0.0f64;
    for t in 0..n {
        for (i, &v) in influence.row(t).iter().enumerate() {
            if i == t {
                diag_max = diag_max.max(v.abs());
            } else {
                off_max = off_max.max(v.abs());
            }
        }
    }
    let norm = |v: f64, m: f64| if m > 0.0 { v / m } else { 0.0 };
    let mut s = Svg::new(side + 2.0 * MARGIN + 160.0, side + 2.0 * MARGIN);
    s.text(
        MARGIN,
        MARGIN - 16.0,
        14.0,
        "start",
        None,
        "Influence matrix (rows: target, columns: source)",
    );
    for t in 0..n {
        for i in 0..n {
            let v = influence.get(t, i);
            let (class, fill) = if i == t {
                ("diag", sequential(norm(v, diag_max)))
            } else {
                ("cell", diverging(norm(v, off_max)))
            };
            s.rect(
                class,
                MARGIN + i as f64 * cell,
                MARGIN + t as f64 * cell,
                cell,
                cell,
                &fill,
            );
        }
    }
    if n <= 40 {
        for (k, id) in record_ids.iter().enumerate() {
            let c = MARGIN + (k as f64 + 0.5) * cell;
            s.text(c, MARGIN + side + 12.0, 9.0, "middle", None, &id.to_string());
            s.text(MARGIN - 4.0, c + 3.0, 9.0, "end", None, &id.to_string());
        }
    }
    let lx = MARGIN + side + 24.0;
    s.text(lx, MARGIN + 10.0, 11.0, "start", None, "off-diagonal");
    for k in 0..=10 {
        let v = 1.0 - k as f64 / 5.0;
        s.rect("legend", lx, MARGIN + 16.0 + k as f64 * 12.0, 16.0, 12.0, &diverging(v));
    }
    s.text(lx + 20.0, MARGIN + 26.0, 10.0, "start", None, &format!("{off_max:.4}"));
    s.text(
        lx + 20.0,
        MARGIN + 146.0,
        10.0,
        "start",
        None,
        &format!("{:.4}", -off_max),
    );
    let dy = MARGIN + 180.0;
    s.text(lx, dy, 11.0, "start", None, "diagonal");
    for k in 0..=5 {
        let v = 1.0 - k as f64 / 5.0;
        s.rect("legend", lx, dy + 6.0 + k as f64 * 12.0, 16.0, 12.0, &sequential(v));
    }
    s.text(lx + 20.0, dy + 16.0, 10.0, "start", None, &format!("{diag_max:.4}"));
    s.text(lx + 20.0, dy + 76.0, 10.0, "start", None, "0.0000");
    s.finish()
}

/// Bars of every source's influence on target `t`, sorted descending.
/// Labels are source ids; members of the target's duplicate group are
/// drawn in red and their label carries a `*`.
pub fn emit_ranked_plot(
    influence: &InfluenceMatrixOf<f64>,
    t: usize,
    record_ids: &[u64],
    groups: &DuplicateGroupMap,
) -> String {
    let ranked = ranked_distribution(influence, t);
    let n = ranked.len();
    let bar = (900.0 / n as f64).clamp(3.0, 24.0);
    let plot_w = bar * n as f64;
    let plot_h = 300.0;
    let hi = ranked.iter().map(|r| r.1).fold(0.0f64, f64::max);
    let lo = ranked.iter().map(|r| r.1).fold(0.0f64, f64::min);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let y_of = |v: f64| MARGIN + (hi - v) / span * plot_h;
    let target_id = record_ids[t];
    let group = groups.group_of(target_id);
    let mut s = Svg::new(plot_w + 2.0 * MARGIN + 40.0, plot_h + 2.0 * MARGIN + 40.0);
    s.text(
        MARGIN,
        MARGIN - 16.0,
        14.0,
        "start",
        None,
        &format!("Influence on target {target_id}, sources ranked"),
    );
    let zero = y_of(0.0);
    for (k, &(i, v)) in ranked.iter().enumerate() {
        let id = record_ids[i];
        let member = group.is_some() && groups.group_of(id) == group;
        let fill = if i == t {
            "#1b7837"
        } else if member {
            "#b2182b"
        } else {
            "#4d4d4d"
        };
        let x = MARGIN + 40.0 + k as f64 * bar;
        let (y, h) = if v >= 0.0 {
            (y_of(v), zero - y_of(v))
        } else {
            (zero, y_of(v) - zero)
        };
        s.rect("bar", x + 0.5, y, (bar - 1.0).max(1.0), h, fill);
        let label = if member { format!("{id}*") } else { id.to_string() };
        s.text(x + bar / 2.0, MARGIN + plot_h + 12.0, 8.0, "end", Some(-90.0), &label);
    }
    s.line(MARGIN + 40.0, zero, MARGIN + 40.0 + plot_w, zero, "#000000");
    s.line(MARGIN + 40.0, MARGIN, MARGIN + 40.0, MARGIN + plot_h, "#000000");
    s.text(MARGIN + 36.0, MARGIN + 4.0, 10.0, "end", None, &format!("{hi:.3}"));
    s.text(MARGIN + 36.0, zero + 4.0, 10.0, "end", None, "0");
    s.text(MARGIN + 36.0, MARGIN + plot_h, 10.0, "end", None, &format!("{lo:.3}"));
    s.finish()
}

/// Two panels over log2(m): mean Spearman's R and the median / p90 of the
/// per-record self-influence std.
pub fn emit_stability_plot(rows: &[StabilityRow]) -> String {
    let (pw, ph) = (320.0, 220.0);
    let mut s = Svg::new(2.0 * pw + 3.0 * MARGIN + 40.0, ph + 2.0 * MARGIN + 40.0);
    let ms: Vec<f64> = rows.iter().map(|e| (e.m as f64).log2()).collect();
    let (xmin, xmax) = ms
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let panel = |s: &mut Svg, left: f64, title: &str, series: &[(Vec<Option<f64>>, &str)]| {
        let vals: Vec<f64> = series.iter().flat_map(|(v, _)| v.iter().flatten().copied()).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-12);
        let x_of = |v: f64| left + 20.0 + (v - xmin) / xspan * (pw - 40.0);
        let y_of = |v: f64| MARGIN + (hi - v) / (hi - lo) * ph;
        s.text(left, MARGIN - 16.0, 13.0, "start", None, title);
        s.line(left, MARGIN + ph, left + pw, MARGIN + ph, "#000000");
        s.line(left, MARGIN, left, MARGIN + ph, "#000000");
        s.text(left - 4.0, MARGIN + 4.0, 10.0, "end", None, &format!("{hi:.3}"));
        s.text(left - 4.0, MARGIN + ph, 10.0, "end", None, &format!("{lo:.3}"));
        for (e, &x) in rows.iter().zip(&ms) {
            s.text(x_of(x), MARGIN + ph + 14.0, 10.0, "middle", None, &e.m.to_string());
        }
        s.text(
            left + pw / 2.0,
            MARGIN + ph + 30.0,
            11.0,
            "middle",
            None,
            "models per group (m)",
        );
        for (values, colour) in series {
            let pts: Vec<(f64, f64)> = values
                .iter()
                .zip(&ms)
                .filter_map(|(v, &x)| v.map(|v| (x_of(x), y_of(v))))
                .collect();
            s.polyline(&pts, colour);
            for &(x, y) in &pts {
                s.circle(x, y, 3.0, colour);
            }
        }
    };
    let spearman: Vec<Option<f64>> = rows.iter().map(|e| e.mean_spearman).collect();
    let p50: Vec<Option<f64>> = rows.iter().map(|e| Some(e.std_p50)).collect();
    let p90: Vec<Option<f64>> = rows.iter().map(|e| Some(e.std_p90)).collect();
    panel(
        &mut s,
        MARGIN + 20.0,
        "Mean Spearman's R of self-influence",
        &[(spearman, "#2166ac")],
    );
    panel(
        &mut s,
        2.0 * MARGIN + pw + 40.0,
        "Self-influence std (median, p90)",
        &[(p50, "#b2182b"), (p90, "#f4a582")],
    );
    s.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn small() -> InfluenceMatrixOf<f64> {
        let m = Matrix::from_rows(vec![vec![2.0, 0.5, -0.25], vec![0.1, 1.0, 0.0], vec![-0.5, 0.3, 3.0]]).unwrap();
        InfluenceMatrixOf::from_parts(m, vec![(1, 1); 3]).unwrap()
    }

    #[test]
    fn heatmap_cells_and_determinism() {
        let a = emit_heatmap(&small(), &[0, 1, 2]);
        assert_eq!(a.matches(r#"class="cell""#).count(), 6);
        assert_eq!(a.matches(r#"class="diag""#).count(), 3);
        assert_eq!(a, emit_heatmap(&small(), &[0, 1, 2]));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn colour_scales() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(1.0), "#b2182b");
        assert_eq!(diverging(-1.0), "#2166ac");
        assert_eq!(sequential(0.0), "#ffffff");
        assert_ne!(sequential(1.0), diverging(1.0));
    }

    #[test]
    fn ranked_plot_marks_group_members() {
        let groups = DuplicateGroupMap {
            groups: vec![crate::duplicates::DuplicateGroup {
                group_id: 0,
                source: 0,
                members: vec![0, 1],
            }],
            n_dup: 2,
            seed: None,
        };
        let svg = emit_ranked_plot(&small(), 0, &[0, 1, 2], &groups);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 3);
        assert!(svg.contains(">0*</text>") && svg.contains(">1*</text>") && svg.contains(">2</text>"));
    }

    #[test]
    fn stability_plot_renders() {
        let rows = vec![
            StabilityRow {
                m: 2,
                mean_spearman: Some(0.3),
                std_p50: 1.0,
                std_p90: 2.0,
            },
            StabilityRow {
                m: 8,
                mean_spearman: None,
                std_p50: 0.0,
                std_p90: 0.0,
            },
        ];
        let svg = emit_stability_plot(&rows);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg, emit_stability_plot(&rows));
    }
}
