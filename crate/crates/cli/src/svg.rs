//! Deterministic SVG rendering of pages: text boxes, graph edges, and the
//! repairs a prediction would need to match the gold grouping.

use layoutgraph::doc::Page;
use layoutgraph::eval::connected_components;

/// Fixed category palette; categories beyond its length wrap around.
const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948", "#9c755f", "#e15759",
];

const NEUTRAL: &str = "#8a8a8a";
const EDGE: &str = "#555555";
const MISSING: &str = "#d62728";

pub fn category_color(category: usize) -> &'static str {
    PALETTE[category % PALETTE.len()]
}

fn center(page: &Page, id: usize) -> (f64, f64) {
    let [x0, y0, x1, y1] = page.boxes[id].bbox_px;
    (0.5 * (x0 + x1), 0.5 * (y0 + y1))
}

/// Renders one page. Box outlines take their class color, or gray when no
/// classes are given. `solid` edges are drawn center to center; `dashed`
/// edges are drawn in red dashes. Identical inputs produce identical bytes:
/// edges are drawn in sorted canonical order and floats with two decimals.
pub fn render_page(
    page: &Page,
    classes: Option<&[usize]>,
    solid: &[(usize, usize)],
    dashed: &[(usize, usize)],
) -> String {
    let (w, h) = (page.width_px, page.height_px);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"
    ));
    for (kind, edges) in [("solid", solid), ("dashed", dashed)] {
        let mut canon: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        canon.sort_unstable();
        canon.dedup();
        for (a, b) in canon {
            let (x1, y1) = center(page, a);
            let (x2, y2) = center(page, b);
            let style = if kind == "solid" {
                format!("stroke=\"{EDGE}\" stroke-width=\"1\"")
            } else {
                format!("stroke=\"{MISSING}\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"")
            };
            out.push_str(&format!(
                "  <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" {style}/>\n"
            ));
        }
    }
    for (i, b) in page.boxes.iter().enumerate() {
        let [x0, y0, x1, y1] = b.bbox_px;
        let color = match classes {
            Some(cs) => category_color(cs[i]),
            None => NEUTRAL,
        };
        out.push_str(&format!(
            "  <rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"{color}\" fill-opacity=\"0.10\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            x1 - x0,
            y1 - y0,
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// The stitches a predicted edge set is missing: for every gold group that
/// the predictions leave in several pieces, a minimum spanning tree over the
/// pieces, each tree edge realized by the closest pair of boxes across its
/// two pieces. An empty result means every group came out connected.
pub fn missing_group_links(
    page: &Page,
    predicted: &[(usize, usize)],
    groups: &[Vec<usize>],
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for group in groups {
        let index_of = |id: usize| group.iter().position(|&g| g == id);
        let local: Vec<(usize, usize)> = predicted
            .iter()
            .filter_map(|&(a, b)| Some((index_of(a)?, index_of(b)?)))
            .collect();
        let pieces: Vec<Vec<usize>> = connected_components(group.len(), &local)
            .into_iter()
            .map(|c| c.into_iter().map(|m| group[m]).collect())
            .collect();
        if pieces.len() < 2 {
            continue;
        }
        // The cheapest box-to-box pair bridging two pieces, ties broken by id.
        let bridge = |a: &[usize], b: &[usize]| -> (f64, usize, usize) {
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
            for &i in a {
                for &j in b {
                    let (xi, yi) = center(page, i);
                    let (xj, yj) = center(page, j);
                    let d2 = (xi - xj).powi(2) + (yi - yj).powi(2);
                    let cand = (d2, i.min(j), i.max(j));
                    if cand.0.total_cmp(&best.0).then(cand.1.cmp(&best.1)).then(cand.2.cmp(&best.2))
                        == std::cmp::Ordering::Less
                    {
                        best = cand;
                    }
                }
            }
            best
        };
        let mut joined = vec![false; pieces.len()];
        joined[0] = true;
        for _ in 1..pieces.len() {
            let mut best = (f64::INFINITY, usize::MAX, usize::MAX, usize::MAX);
            for (p, piece) in pieces.iter().enumerate() {
                if joined[p] {
                    continue;
                }
                for (q, other) in pieces.iter().enumerate() {
                    if !joined[q] {
                        continue;
                    }
                    let (d2, i, j) = bridge(piece, other);
                    if (d2, i, j, p) < best {
                        best = (d2, i, j, p);
                    }
                }
            }
            joined[best.3] = true;
            out.push((best.1, best.2));
        }
    }
    out.sort_unstable();
    out
}
