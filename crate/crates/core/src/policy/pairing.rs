//! Static acquire/release pairing checker over a small program-graph DSL,
//! modeling the verifier rule that every resource acquisition must have a
//! matching release on the same code path.
//!
//! DSL, one statement per line (`#` starts a comment):
//!
//! ```text
//! prog <name>            optional header
//! [label:] acquire
//! [label:] release
//! [label:] nop
//! [label:] branch <label>   two successors: fall-through and the target
//! [label:] exit
//! ```
//!
//! The control-flow graph must be loop-free; cycles, unknown labels, and
//! falling off the end are malformed.

use std::collections::{BTreeMap, BTreeSet};

use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Acquire,
    Release,
    Nop,
    Branch(usize),
    Exit,
}

#[derive(Debug, Clone)]
pub struct PairingProgram {
    pub id: String,
    ops: Vec<OpKind>,
}

impl PairingProgram {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// The instruction list (for independent graph walkers in tests).
    pub fn ops(&self) -> &[OpKind] {
        &self.ops
    }

    fn successors(&self, i: usize) -> Vec<usize> {
        match self.ops[i] {
            OpKind::Exit => vec![],
            OpKind::Branch(target) => vec![i + 1, target],
            _ => vec![i + 1],
        }
    }
}

/// One unbalanced root-to-exit path. `unmatched` is positive for leaked
/// acquisitions and negative when a release had no matching acquisition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingViolation {
    pub program: String,
    pub path_id: u64,
    pub path: String,
    pub unmatched: i64,
}

/// Empty iff every acquisition has a matching release on every path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairingCheckReport {
    pub violations: Vec<PairingViolation>,
}

impl PairingCheckReport {
    pub fn is_balanced(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parses the line-based DSL into a validated loop-free program graph.
pub fn parse_program_graph(text: &str) -> Result<PairingProgram, PolicyError> {
    let mut id = "program".to_string();
    let mut stmts: Vec<(usize, Option<String>, String, Option<String>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("prog ") {
            if !stmts.is_empty() {
                return Err(PolicyError::MalformedProgramGraph {
                    line: line_no,
                    msg: "prog header must come first".to_string(),
                });
            }
            id = rest.trim().to_string();
            continue;
        }
        let (label, body) = match line.split_once(':') {
            Some((l, rest)) => (Some(l.trim().to_string()), rest.trim()),
            None => (None, line),
        };
        let mut parts = body.split_whitespace();
        let op = parts.next().unwrap_or("").to_string();
        let arg = parts.next().map(|s| s.to_string());
        if parts.next().is_some() {
            return Err(PolicyError::MalformedProgramGraph {
                line: line_no,
                msg: "too many tokens".to_string(),
            });
        }
        stmts.push((line_no, label, op, arg));
    }
    if stmts.is_empty() {
        return Err(PolicyError::MalformedProgramGraph {
            line: 0,
            msg: "empty program".to_string(),
        });
    }
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    for (i, (line_no, label, _, _)) in stmts.iter().enumerate() {
        if let Some(l) = label {
            if labels.insert(l.clone(), i).is_some() {
                return Err(PolicyError::MalformedProgramGraph {
                    line: *line_no,
                    msg: format!("duplicate label {l}"),
                });
            }
        }
    }
    let mut ops = Vec::with_capacity(stmts.len());
    for (i, (line_no, _, op, arg)) in stmts.iter().enumerate() {
        let kind = match (op.as_str(), arg) {
            ("acquire", None) => OpKind::Acquire,
            ("release", None) => OpKind::Release,
            ("nop", None) => OpKind::Nop,
            ("exit", None) => OpKind::Exit,
            ("branch", Some(target)) => {
                let t = *labels.get(target).ok_or_else(|| {
                    PolicyError::MalformedProgramGraph {
                        line: *line_no,
                        msg: format!("unknown label {target}"),
                    }
                })?;
                OpKind::Branch(t)
            }
            _ => {
                return Err(PolicyError::MalformedProgramGraph {
                    line: *line_no,
                    msg: format!("cannot parse statement {op:?}"),
                })
            }
        };
        // non-exit statements must have a fall-through successor
        if kind != OpKind::Exit && i + 1 == stmts.len() {
            return Err(PolicyError::MalformedProgramGraph {
                line: *line_no,
                msg: "control flow falls off the end (last statement must be exit)".to_string(),
            });
        }
        ops.push(kind);
    }
    let prog = PairingProgram { id, ops };
    // loop-free check: DFS from the entry over successors
    let mut state = vec![0u8; prog.len()]; // 0 unvisited, 1 on stack, 2 done
    fn dfs(prog: &PairingProgram, i: usize, state: &mut [u8]) -> bool {
        if state[i] == 1 {
            return false;
        }
        if state[i] == 2 {
            return true;
        }
        state[i] = 1;
        for s in prog.successors(i) {
            if !dfs(prog, s, state) {
                return false;
            }
        }
        state[i] = 2;
        true
    }
    if !dfs(&prog, 0, &mut state) {
        return Err(PolicyError::MalformedProgramGraph {
            line: 0,
            msg: "control-flow graph contains a cycle".to_string(),
        });
    }
    Ok(prog)
}

const MAX_REPORTED: usize = 256;

/// Checks that acquisitions and releases balance on every root-to-exit
/// path. The verdict comes from a dataflow pass over reachable
/// (balance, minimum) states; violating paths are then enumerated as
/// witnesses (capped at a reporting limit).
pub fn check_pairing(prog: &PairingProgram) -> Result<PairingCheckReport, PolicyError> {
    // dataflow: set of (balance, min_balance) states after each statement
    let mut states: Vec<BTreeSet<(i64, i64)>> = vec![BTreeSet::new(); prog.len()];
    let mut work: Vec<(usize, i64, i64)> = vec![(0, 0, 0)];
    let mut any_bad_exit = false;
    while let Some((i, balance, min)) = work.pop() {
        let (balance, min) = match prog.ops[i] {
            OpKind::Acquire => (balance + 1, min),
            OpKind::Release => (balance - 1, min.min(balance - 1)),
            _ => (balance, min),
        };
        if !states[i].insert((balance, min)) {
            continue;
        }
        if prog.ops[i] == OpKind::Exit && (balance != 0 || min < 0) {
            any_bad_exit = true;
        }
        for s in prog.successors(i) {
            work.push((s, balance, min));
        }
    }
    if !any_bad_exit {
        return Ok(PairingCheckReport::default());
    }
    // witness enumeration
    let mut violations = Vec::new();
    let mut path_id = 0u64;
    let mut stack: Vec<(usize, i64, i64, Vec<usize>)> = vec![(0, 0, 0, vec![])];
    // depth-first in successor order so path ids are deterministic
    while let Some((i, balance, min, mut path)) = stack.pop() {
        let (balance, min) = match prog.ops[i] {
            OpKind::Acquire => (balance + 1, min),
            OpKind::Release => (balance - 1, min.min(balance - 1)),
            _ => (balance, min),
        };
        path.push(i);
        if prog.ops[i] == OpKind::Exit {
            if (balance != 0 || min < 0)
                && violations.len() < MAX_REPORTED {
                    violations.push(PairingViolation {
                        program: prog.id.clone(),
                        path_id,
                        path: path
                            .iter()
                            .map(|n| n.to_string())
                            .collect::<Vec<_>>()
                            .join("->"),
                        unmatched: if balance != 0 { balance } else { min },
                    });
                }
            path_id += 1;
            continue;
        }
        // push in reverse so the fall-through branch explores first
        for s in prog.successors(i).into_iter().rev() {
            stack.push((s, balance, min, path.clone()));
        }
    }
    Ok(PairingCheckReport { violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(text: &str) -> PairingCheckReport {
        check_pairing(&parse_program_graph(text).unwrap()).unwrap()
    }

    #[test]
    fn straight_line_get_put_is_balanced() {
        let report = check("acquire\nrelease\nexit\n");
        assert!(report.is_balanced());
    }

    #[test]
    fn acquire_on_one_branch_release_on_the_other_is_one_violation() {
        // acquire, then branch: fall-through releases, target path does not
        let text = "acquire\nbranch skip\nrelease\nexit\nskip: exit\n";
        let report = check(text);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].unmatched, 1);
        assert!(report.violations[0].path.contains("4"));
    }

    #[test]
    fn nested_pairs_are_balanced() {
        let report = check("acquire\nacquire\nrelease\nrelease\nexit\n");
        assert!(report.is_balanced());
    }

    #[test]
    fn release_without_acquisition_is_a_violation() {
        let report = check("acquire\nrelease\nrelease\nexit\n");
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].unmatched, -1);
    }

    #[test]
    fn release_then_acquire_nets_zero_but_still_violates() {
        let report = check("release\nacquire\nexit\n");
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].unmatched, -1);
    }

    #[test]
    fn cycles_are_malformed() {
        let err = parse_program_graph("top: acquire\nbranch top\nexit\n").unwrap_err();
        assert!(matches!(err, PolicyError::MalformedProgramGraph { .. }));
    }

    #[test]
    fn unknown_label_is_malformed() {
        assert!(parse_program_graph("branch nowhere\nexit\n").is_err());
    }

    #[test]
    fn falling_off_the_end_is_malformed() {
        assert!(parse_program_graph("acquire\nrelease\n").is_err());
    }

    #[test]
    fn comments_and_header_parse() {
        let text = "prog demo\n# header comment\nacquire # inline\nrelease\nexit\n";
        let prog = parse_program_graph(text).unwrap();
        assert_eq!(prog.id, "demo");
        assert!(check_pairing(&prog).unwrap().is_balanced());
    }
}
