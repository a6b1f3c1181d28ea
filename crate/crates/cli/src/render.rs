//! ASCII time diagrams: rows are rounds, columns are nodes, cells hold the
//! role letters of the agents on that node at the end of the round. The
//! black-hole column is flagged with `*` and destructions print `†`.

use bbhsim::engine::ExecutionTrace;
use bbhsim::graph::{GraphFile, NodeId};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Columns in node-id order (natural for generated paths).
    Path,
    /// Columns in breadth-first order from home.
    Bfs,
}

impl std::str::FromStr for Layout {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(Layout::Path),
            "bfs" => Ok(Layout::Bfs),
            other => Err(format!("unknown layout '{other}' (use path|bfs)")),
        }
    }
}

pub fn render(trace: &ExecutionTrace, graph: &GraphFile, layout: Layout) -> Result<String, String> {
    let instance = graph.to_instance(Some(1)).map_err(|e| e.to_string())?;
    let order: Vec<NodeId> = match layout {
        Layout::Path => (0..graph.nodes).collect(),
        Layout::Bfs => {
            let mut seen = vec![false; graph.nodes];
            let mut order = vec![graph.home];
            seen[graph.home] = true;
            let mut i = 0;
            while i < order.len() {
                let v = order[i];
                i += 1;
                for u in instance.graph.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        order.push(u);
                    }
                }
            }
            order
        }
    };
    let width = 10usize;
    let mut out = String::new();
    out.push_str(&format!("{:>6} ", "round"));
    for &v in &order {
        let mark = if Some(v) == graph.bbh { format!("v{v}*") } else { format!("v{v}") };
        out.push_str(&format!("|{mark:^width$}"));
    }
    out.push('\n');
    out.push_str(&format!("{:->6}-", ""));
    for _ in &order {
        out.push_str(&format!("+{:-^width$}", ""));
    }
    out.push('\n');
    // Destruction positions: agents destroyed in round r are shown at the
    // black hole.
    for rec in &trace.rounds {
        let mut cells: BTreeMap<NodeId, String> = BTreeMap::new();
        for (id, &node) in &rec.positions {
            let tag = rec.roles.get(id).cloned().unwrap_or_else(|| id.to_string());
            let cell = cells.entry(node).or_default();
            if !cell.is_empty() {
                cell.push(' ');
            }
            cell.push_str(&tag);
        }
        if !rec.destroyed.is_empty() {
            if let Some(b) = graph.bbh {
                let cell = cells.entry(b).or_default();
                for _ in &rec.destroyed {
                    if !cell.is_empty() {
                        cell.push(' ');
                    }
                    cell.push('†');
                }
            }
        }
        out.push_str(&format!("{:>6} ", rec.round));
        for &v in &order {
            let cell = cells.get(&v).cloned().unwrap_or_default();
            out.push_str(&format!("|{cell:^width$}"));
        }
        out.push('\n');
    }
    Ok(out)
}
