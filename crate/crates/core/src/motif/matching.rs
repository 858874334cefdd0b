use std::collections::{BTreeMap, BTreeSet};

use crate::event_model::KernelObjectId;
use crate::provenance::{NodeKind, ProvDocument, Relation};

use super::build::{Motif, MotifEdge};
use super::MotifError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// The motif must be isomorphic to the whole document.
    Exact,
    /// The document must embed into the motif: a filtered capture is a
    /// subgraph of the full prediction, so everything captured must be
    /// predicted, while predicted elements may be filtered away.
    Embed,
}

/// Result of matching a motif against a captured document.
#[derive(Debug, Clone)]
pub struct MatchReport {
    pub matched: bool,
    /// Motif variable -> concrete object, when matched.
    pub witness: BTreeMap<usize, KernelObjectId>,
    /// Structural diffs, first missing/extra element first.
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ObjSide {
    kind: NodeKind,
    versions: Vec<u64>,
}

#[derive(Debug)]
struct DocSide {
    objects: Vec<KernelObjectId>,
    info: BTreeMap<KernelObjectId, ObjSide>,
    edges: Vec<(KernelObjectId, u64, KernelObjectId, u64, Relation, u64)>,
}

fn doc_side(doc: &ProvDocument) -> DocSide {
    let mut info: BTreeMap<KernelObjectId, ObjSide> = BTreeMap::new();
    for n in doc.nodes() {
        let e = info.entry(n.object).or_insert(ObjSide {
            kind: n.kind,
            versions: Vec::new(),
        });
        e.versions.push(n.version);
    }
    for side in info.values_mut() {
        side.versions.sort_unstable();
    }
    let edges = doc
        .edges()
        .iter()
        .map(|e| {
            (
                e.from.object,
                e.from.version,
                e.to.object,
                e.to.version,
                e.relation,
                e.count,
            )
        })
        .collect();
    DocSide {
        objects: info.keys().copied().collect(),
        info,
        edges,
    }
}

/// Verifies a fixed doc-object-to-variable assignment for embed mode:
/// every document element must map onto a motif element (the motif may
/// predict more than the filtered capture recorded).
fn diff_embedding(
    motif: &Motif,
    doc: &DocSide,
    assign: &BTreeMap<KernelObjectId, usize>,
) -> Vec<String> {
    let mut diffs = Vec::new();
    let mut motif_nodes: BTreeSet<(usize, u64)> = BTreeSet::new();
    for n in &motif.nodes {
        motif_nodes.insert((n.var, n.version));
    }
    for (obj, side) in &doc.info {
        let Some(var) = assign.get(obj) else {
            diffs.push(format!("object {obj} is not predicted by the motif"));
            continue;
        };
        if motif.var_kinds[*var] != side.kind {
            diffs.push(format!(
                "object {} has kind {:?}, motif variable expects {:?}",
                obj, side.kind, motif.var_kinds[*var]
            ));
        }
        for v in &side.versions {
            if !motif_nodes.contains(&(*var, *v)) {
                diffs.push(format!("unpredicted node {obj}@v{v}"));
            }
        }
    }
    let mut pool: Vec<(usize, u64, usize, u64, Relation, u64)> =
        motif.edges.iter().map(motif_edge_sig).collect();
    for d in &doc.edges {
        let (Some(fv), Some(tv)) = (assign.get(&d.0), assign.get(&d.2)) else {
            continue; // endpoint already reported above
        };
        let want = (*fv, d.1, *tv, d.3, d.4, d.5);
        match pool.iter().position(|m| *m == want) {
            Some(i) => {
                pool.swap_remove(i);
            }
            None => {
                let near = pool
                    .iter()
                    .find(|m| (m.0, m.1, m.2, m.3, m.4) == (want.0, want.1, want.2, want.3, want.4));
                match near {
                    Some(m) => diffs.push(format!(
                        "edge {}@v{} -{}-> {}@v{} has count {}, motif predicts {}",
                        d.0, d.1, d.4, d.2, d.3, d.5, m.5
                    )),
                    None => diffs.push(format!(
                        "unpredicted edge {}@v{} -{}-> {}@v{} (count {})",
                        d.0, d.1, d.4, d.2, d.3, d.5
                    )),
                }
            }
        }
    }
    diffs
}

/// Backtracking search for an injective doc-object-to-variable assignment
/// under which the document embeds into the motif.
fn search_embedding(motif: &Motif, doc: &DocSide) -> Option<BTreeMap<KernelObjectId, usize>> {
    let objects = &doc.objects;
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(objects.len());
    for obj in objects {
        let side = &doc.info[obj];
        let cands: Vec<usize> = (0..motif.var_kinds.len())
            .filter(|&var| {
                motif.var_kinds[var] == side.kind && {
                    let versions = motif.var_versions(var);
                    side.versions.iter().all(|v| versions.contains(v))
                }
            })
            .collect();
        candidates.push(cands);
    }
    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.sort_by_key(|&i| candidates[i].len());

    fn dfs(
        motif: &Motif,
        doc: &DocSide,
        order: &[usize],
        candidates: &[Vec<usize>],
        pos: usize,
        assign: &mut BTreeMap<KernelObjectId, usize>,
        used: &mut BTreeSet<usize>,
    ) -> bool {
        if pos == order.len() {
            return diff_embedding(motif, doc, assign).is_empty();
        }
        let idx = order[pos];
        let obj = doc.objects[idx];
        for &var in &candidates[idx] {
            if used.contains(&var) {
                continue;
            }
            assign.insert(obj, var);
            used.insert(var);
            // prune: edges between already-assigned objects must embed
            let partial_ok = doc
                .edges
                .iter()
                .filter(|d| d.0 == obj || d.2 == obj)
                .all(|d| {
                    let (Some(fv), Some(tv)) = (assign.get(&d.0), assign.get(&d.2)) else {
                        return true;
                    };
                    motif
                        .edges
                        .iter()
                        .any(|m| motif_edge_sig(m) == (*fv, d.1, *tv, d.3, d.4, d.5))
                });
            if partial_ok && dfs(motif, doc, order, candidates, pos + 1, assign, used) {
                return true;
            }
            assign.remove(&obj);
            used.remove(&var);
        }
        false
    }

    let mut assign = BTreeMap::new();
    let mut used = BTreeSet::new();
    if dfs(motif, doc, &order, &candidates, 0, &mut assign, &mut used) {
        Some(assign)
    } else {
        None
    }
}

/// Verifies a fixed variable assignment for exact matching; returns the
/// diffs (empty = match).
fn diff_under(
    motif: &Motif,
    doc: &DocSide,
    assign: &BTreeMap<usize, KernelObjectId>,
) -> Vec<String> {
    let mut diffs = Vec::new();
    let mut doc_nodes: BTreeSet<(KernelObjectId, u64)> = BTreeSet::new();
    for (obj, side) in &doc.info {
        for v in &side.versions {
            doc_nodes.insert((*obj, *v));
        }
    }
    let mut motif_nodes: BTreeSet<(KernelObjectId, u64)> = BTreeSet::new();
    for n in &motif.nodes {
        let Some(obj) = assign.get(&n.var) else {
            diffs.push(format!("motif variable {} has no counterpart object", n.var));
            continue;
        };
        motif_nodes.insert((*obj, n.version));
        if !doc_nodes.contains(&(*obj, n.version)) {
            diffs.push(format!("missing node {}@v{}", obj, n.version));
        } else {
            let kind = doc.info[obj].kind;
            if kind != n.kind {
                diffs.push(format!(
                    "node {}@v{} has kind {:?}, motif expects {:?}",
                    obj, n.version, kind, n.kind
                ));
            }
        }
    }
    for (obj, v) in &doc_nodes {
        if !motif_nodes.contains(&(*obj, *v)) {
            diffs.push(format!("extra node {}@v{}", obj, v));
        }
    }
    // edges as multisets
    let mut pool: Vec<(KernelObjectId, u64, KernelObjectId, u64, Relation, u64)> =
        doc.edges.clone();
    for e in &motif.edges {
        let (Some(from), Some(to)) = (assign.get(&e.from.0), assign.get(&e.to.0)) else {
            continue;
        };
        let want = (*from, e.from.1, *to, e.to.1, e.relation, e.count);
        match pool.iter().position(|d| *d == want) {
            Some(i) => {
                pool.swap_remove(i);
            }
            None => {
                // distinguish multiplicity mismatches from missing edges
                let near = pool.iter().find(|d| {
                    (d.0, d.1, d.2, d.3, d.4) == (want.0, want.1, want.2, want.3, want.4)
                });
                match near {
                    Some(d) => diffs.push(format!(
                        "edge {}@v{} -{}-> {}@v{} has count {}, motif expects {}",
                        want.0, want.1, want.4, want.2, want.3, d.5, want.5
                    )),
                    None => diffs.push(format!(
                        "missing edge {}@v{} -{}-> {}@v{} (count {})",
                        want.0, want.1, want.4, want.2, want.3, want.5
                    )),
                }
            }
        }
    }
    for d in pool {
        diffs.push(format!(
            "extra edge {}@v{} -{}-> {}@v{} (count {})",
            d.0, d.1, d.4, d.2, d.3, d.5
        ));
    }
    diffs
}

fn motif_edge_sig(e: &MotifEdge) -> (usize, u64, usize, u64, Relation, u64) {
    (e.from.0, e.from.1, e.to.0, e.to.1, e.relation, e.count)
}

/// Backtracking search for a kind- and version-chain-respecting exact
/// assignment.
fn search(motif: &Motif, doc: &DocSide) -> Option<BTreeMap<usize, KernelObjectId>> {
    let nvars = motif.var_kinds.len();
    if doc.objects.len() != nvars {
        return None;
    }
    // per-variable candidates
    let mut candidates: Vec<Vec<KernelObjectId>> = Vec::with_capacity(nvars);
    for var in 0..nvars {
        let versions = motif.var_versions(var);
        let kind = motif.var_kinds[var];
        let cands: Vec<KernelObjectId> = doc
            .objects
            .iter()
            .filter(|obj| {
                let side = &doc.info[*obj];
                side.kind == kind && side.versions == versions
            })
            .copied()
            .collect();
        candidates.push(cands);
    }
    // assign most-constrained variables first
    let mut order: Vec<usize> = (0..nvars).collect();
    order.sort_by_key(|&v| candidates[v].len());

    // index doc edges for incremental consistency checks
    let mut doc_edge_count: BTreeMap<(KernelObjectId, u64, KernelObjectId, u64, Relation, u64), usize> =
        BTreeMap::new();
    for d in &doc.edges {
        *doc_edge_count.entry(*d).or_insert(0) += 1;
    }

    struct Ctx<'a> {
        motif: &'a Motif,
        candidates: &'a [Vec<KernelObjectId>],
        order: &'a [usize],
        doc_edge_count: &'a BTreeMap<(KernelObjectId, u64, KernelObjectId, u64, Relation, u64), usize>,
    }

    fn consistent(ctx: &Ctx<'_>, assign: &BTreeMap<usize, KernelObjectId>, newly: usize) -> bool {
        // every motif edge with both endpoints assigned must exist with the
        // required multiplicity
        let mut need: BTreeMap<(KernelObjectId, u64, KernelObjectId, u64, Relation, u64), usize> =
            BTreeMap::new();
        for e in &ctx.motif.edges {
            if e.from.0 != newly && e.to.0 != newly {
                continue;
            }
            let (Some(f), Some(t)) = (assign.get(&e.from.0), assign.get(&e.to.0)) else {
                continue;
            };
            let sig = motif_edge_sig(e);
            *need.entry((*f, sig.1, *t, sig.3, sig.4, sig.5)).or_insert(0) += 1;
        }
        for (key, n) in need {
            let have = ctx.doc_edge_count.get(&key).copied().unwrap_or(0);
            if have < n {
                return false;
            }
            if have != n {
                // parallel identical edges must agree exactly
                // (count label already part of the key)
                let motif_total = ctx
                    .motif
                    .edges
                    .iter()
                    .filter(|e| {
                        let (Some(f), Some(t)) = (assign.get(&e.from.0), assign.get(&e.to.0))
                        else {
                            return false;
                        };
                        (*f, e.from.1, *t, e.to.1, e.relation, e.count) == key
                    })
                    .count();
                if motif_total != have {
                    return false;
                }
            }
        }
        true
    }

    fn dfs(
        ctx: &Ctx<'_>,
        pos: usize,
        assign: &mut BTreeMap<usize, KernelObjectId>,
        used: &mut BTreeSet<KernelObjectId>,
    ) -> bool {
        if pos == ctx.order.len() {
            return true;
        }
        let var = ctx.order[pos];
        for cand in &ctx.candidates[var] {
            if used.contains(cand) {
                continue;
            }
            assign.insert(var, *cand);
            used.insert(*cand);
            if consistent(ctx, assign, var) && dfs(ctx, pos + 1, assign, used) {
                return true;
            }
            assign.remove(&var);
            used.remove(cand);
        }
        false
    }

    let ctx = Ctx {
        motif,
        candidates: &candidates,
        order: &order,
        doc_edge_count: &doc_edge_count,
    };
    let mut assign = BTreeMap::new();
    let mut used = BTreeSet::new();
    if dfs(&ctx, 0, &mut assign, &mut used) {
        Some(assign)
    } else {
        None
    }
}

/// Matches a captured document against a motif. Exact mode demands
/// isomorphism (respecting kinds, relations, version chains and merge
/// counts); embed mode demands that the document be a subgraph of the
/// motif's prediction, as filtered captures are.
pub fn match_motif(
    doc: &ProvDocument,
    motif: &Motif,
    mode: MatchMode,
) -> Result<MatchReport, MotifError> {
    if let Err(stuck) = doc.topo_sort() {
        return Err(MotifError::InvalidDocument(format!(
            "document contains a cycle through {} node(s)",
            stuck.len()
        )));
    }
    let side = doc_side(doc);
    match mode {
        MatchMode::Exact => match_exact(&side, motif),
        MatchMode::Embed => match_embed(&side, motif),
    }
}

fn match_exact(side: &DocSide, motif: &Motif) -> Result<MatchReport, MotifError> {
    // fast path: motifs built from a concrete trace carry their identity
    // assignment; diffs under it name real objects
    let identity: Option<BTreeMap<usize, KernelObjectId>> = motif
        .var_objects
        .iter()
        .enumerate()
        .map(|(i, o)| o.map(|o| (i, o)))
        .collect();
    if let Some(identity) = &identity {
        let diffs = diff_under(motif, side, identity);
        if diffs.is_empty() {
            return Ok(MatchReport {
                matched: true,
                witness: identity.clone(),
                mismatches: Vec::new(),
            });
        }
    }
    if let Some(assign) = search(motif, side) {
        let diffs = diff_under(motif, side, &assign);
        if diffs.is_empty() {
            return Ok(MatchReport {
                matched: true,
                witness: assign,
                mismatches: Vec::new(),
            });
        }
    }
    // no assignment works; report diffs under the most informative mapping
    let fallback = identity.unwrap_or_else(|| greedy_assign(motif, side));
    let mut mismatches = diff_under(motif, side, &fallback);
    if mismatches.is_empty() {
        mismatches.push("no consistent object assignment exists".to_string());
    }
    Ok(MatchReport {
        matched: false,
        witness: BTreeMap::new(),
        mismatches,
    })
}

fn match_embed(side: &DocSide, motif: &Motif) -> Result<MatchReport, MotifError> {
    let report_from = |assign: BTreeMap<KernelObjectId, usize>| MatchReport {
        matched: true,
        witness: assign.into_iter().map(|(obj, var)| (var, obj)).collect(),
        mismatches: Vec::new(),
    };
    // identity fast path via the motif's recorded concrete objects
    let identity: Option<BTreeMap<KernelObjectId, usize>> = motif
        .var_objects
        .iter()
        .enumerate()
        .map(|(i, o)| o.map(|o| (o, i)))
        .collect();
    if let Some(identity) = &identity {
        if diff_embedding(motif, side, identity).is_empty() {
            return Ok(report_from(identity.clone()));
        }
    }
    if let Some(assign) = search_embedding(motif, side) {
        return Ok(report_from(assign));
    }
    let fallback = identity.unwrap_or_default();
    let mut mismatches = diff_embedding(motif, side, &fallback);
    if mismatches.is_empty() {
        mismatches.push("no consistent embedding exists".to_string());
    }
    Ok(MatchReport {
        matched: false,
        witness: BTreeMap::new(),
        mismatches,
    })
}

/// Kind-respecting positional assignment used only for diff reporting.
fn greedy_assign(motif: &Motif, doc: &DocSide) -> BTreeMap<usize, KernelObjectId> {
    let mut by_kind: BTreeMap<NodeKind, Vec<KernelObjectId>> = BTreeMap::new();
    for obj in &doc.objects {
        by_kind.entry(doc.info[obj].kind).or_default().push(*obj);
    }
    let mut cursor: BTreeMap<NodeKind, usize> = BTreeMap::new();
    let mut assign = BTreeMap::new();
    for (var, kind) in motif.var_kinds.iter().enumerate() {
        let pool = by_kind.entry(*kind).or_default();
        let idx = cursor.entry(*kind).or_insert(0);
        if *idx < pool.len() {
            assign.insert(var, pool[*idx]);
            *idx += 1;
        }
    }
    assign
}
