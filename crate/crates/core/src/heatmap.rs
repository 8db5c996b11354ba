//! Static SVG heatmap of per-group performance: one row per group, one
//! column per model, cell shade proportional to the group mean, cell text
//! with the value to two decimals. Byte output is deterministic for a
//! fixed input.

use crate::error::{AuditError, Result};
use crate::fairness::GroupedEvaluation;

const CELL_W: usize = 96;
const CELL_H: usize = 36;
const LEFT_MARGIN: usize = 170;
const TOP_MARGIN: usize = 56;
const PAD: usize = 12;

/// Linear white-to-blue shade for a value in [0, 1].
fn shade(value: f64) -> (u8, u8, u8) {
    let v = value.clamp(0.0, 1.0);
    let channel = |from: f64, to: f64| -> u8 { (from + (to - from) * v).round() as u8 };
    (channel(255.0, 33.0), channel(255.0, 102.0), channel(255.0, 172.0))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render grouped evaluations of one or more models that share a grouping.
///
/// Rows are the non-empty groups (bins labeled by their range); columns are
/// the models in the given order. Errors when the groupings differ or when
/// fewer than two non-empty groups exist, mirroring the unfairness-score
/// precondition.
pub fn render_heatmap(columns: &[(String, &GroupedEvaluation)]) -> Result<Vec<u8>> {
    let Some((_, first)) = columns.first() else {
        return Err(AuditError::Eval("heatmap needs at least one model".into()));
    };
    for (name, grouped) in columns {
        let same = grouped.strategy == first.strategy
            && grouped.groups.len() == first.groups.len()
            && grouped
                .groups
                .iter()
                .zip(&first.groups)
                .all(|(a, b)| a.group_id == b.group_id);
        if !same {
            return Err(AuditError::Eval(format!(
                "heatmap grouping mismatch for model {name}"
            )));
        }
    }
    // Rows: groups that are non-empty in at least one column.
    let rows: Vec<usize> = (0..first.groups.len())
        .filter(|&g| columns.iter().any(|(_, e)| e.groups[g].mean.is_some()))
        .collect();
    if rows.len() < 2 {
        return Err(AuditError::Eval(format!(
            "heatmap needs at least two non-empty groups, found {}",
            rows.len()
        )));
    }

    let width = LEFT_MARGIN + columns.len() * CELL_W + PAD;
    let height = TOP_MARGIN + rows.len() * CELL_H + PAD;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{PAD}\" y=\"18\" font-size=\"13\">group mean {} per model</text>\n",
        xml_escape(&first.metric)
    ));

    for (c, (name, _)) in columns.iter().enumerate() {
        let x = LEFT_MARGIN + c * CELL_W + CELL_W / 2;
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            TOP_MARGIN - 10,
            xml_escape(name)
        ));
    }

    for (r, &g) in rows.iter().enumerate() {
        let y = TOP_MARGIN + r * CELL_H;
        let label_y = y + CELL_H / 2 + 4;
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{label_y}\" text-anchor=\"end\">{}</text>\n",
            LEFT_MARGIN - 8,
            xml_escape(&first.groups[g].group_id)
        ));
        for (c, (_, grouped)) in columns.iter().enumerate() {
            let x = LEFT_MARGIN + c * CELL_W;
            match grouped.groups[g].mean {
                Some(mean) => {
                    let (red, green, blue) = shade(mean);
                    let text_fill = if mean > 0.55 { "white" } else { "black" };
                    svg.push_str(&format!(
                        "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" \
                         fill=\"rgb({red},{green},{blue})\" stroke=\"#888\"/>\n"
                    ));
                    svg.push_str(&format!(
                        "  <text x=\"{}\" y=\"{label_y}\" text-anchor=\"middle\" fill=\"{text_fill}\">{mean:.2}</text>\n",
                        x + CELL_W / 2,
                    ));
                }
                None => {
                    svg.push_str(&format!(
                        "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" \
                         fill=\"white\" stroke=\"#888\"/>\n"
                    ));
                    svg.push_str(&format!(
                        "  <text x=\"{}\" y=\"{label_y}\" text-anchor=\"middle\" fill=\"#888\">n/a</text>\n",
                        x + CELL_W / 2,
                    ));
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg.into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::{default_bin_edges, GroupSummary, GroupingStrategy};

    fn grouped(means: &[Option<f64>]) -> GroupedEvaluation {
        let strategy = GroupingStrategy::adr_bins(default_bin_edges()).unwrap();
        GroupedEvaluation {
            strategy,
            metric: "accuracy".into(),
            groups: means
                .iter()
                .enumerate()
                .map(|(i, mean)| GroupSummary {
                    group_id: format!("adr bin {i}"),
                    members: vec![],
                    n_members: usize::from(mean.is_some()),
                    mean: *mean,
                })
                .collect(),
            empty_groups: vec![],
        }
    }

    #[test]
    fn oracle_column_is_uniformly_one() {
        let oracle = grouped(&[Some(1.0), Some(1.0), Some(1.0)]);
        let svg = String::from_utf8(
            render_heatmap(&[("oracle".to_string(), &oracle)]).unwrap(),
        )
        .unwrap();
        assert_eq!(svg.matches(">1.00</text>").count(), 3);
        // Uniform shade: exactly one distinct fill among the value cells.
        let fills: std::collections::BTreeSet<&str> = svg
            .match_indices("fill=\"rgb(")
            .map(|(i, _)| &svg[i + 6..i + 24])
            .collect();
        assert_eq!(fills.len(), 1);
    }

    #[test]
    fn disparate_column_has_a_wider_value_range() {
        let unfair = grouped(&[Some(1.0), Some(0.4), Some(0.9)]);
        let fair = grouped(&[Some(0.9), Some(0.85), Some(0.88)]);
        let svg = String::from_utf8(
            render_heatmap(&[
                ("mv".to_string(), &unfair),
                ("annotator".to_string(), &fair),
            ])
            .unwrap(),
        )
        .unwrap();
        assert!(svg.contains(">0.40<"));
        assert!(svg.contains(">0.85<"));
        // Distinct shades appear for distinct values.
        assert!(svg.contains("rgb(255,255,255)") || svg.contains("rgb("));
    }

    #[test]
    fn single_group_is_an_error() {
        let single = grouped(&[Some(1.0)]);
        assert!(render_heatmap(&[("oracle".to_string(), &single)]).is_err());
        let one_nonempty = grouped(&[Some(1.0), None, None]);
        assert!(render_heatmap(&[("oracle".to_string(), &one_nonempty)]).is_err());
    }

    #[test]
    fn grouping_mismatch_is_an_error() {
        let a = grouped(&[Some(1.0), Some(0.5)]);
        let mut b = grouped(&[Some(1.0), Some(0.5)]);
        b.strategy = GroupingStrategy::adr_bins(vec![0.0, 0.5, 1.0]).unwrap();
        assert!(render_heatmap(&[("a".to_string(), &a), ("b".to_string(), &b)]).is_err());
    }

    #[test]
    fn output_bytes_are_deterministic() {
        let g = grouped(&[Some(0.97), Some(0.42), Some(0.73)]);
        let a = render_heatmap(&[("mv".to_string(), &g)]).unwrap();
        let b = render_heatmap(&[("mv".to_string(), &g)]).unwrap();
        assert_eq!(a, b);
    }
}
