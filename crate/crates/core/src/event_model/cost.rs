use num::rational::Ratio;
use std::collections::BTreeMap;

use super::{expand_syscall, EventError, HookId, SyscallRecord};

/// Exact nonnegative rational cost. Rationals keep the cost law exact:
/// with a uniform per-hook cost C, an open over a depth-N path costs
/// C x (N+1) with no rounding.
pub type Cost = Ratio<u64>;

/// Per-hook invocation cost.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostModel {
    per_hook_cost: BTreeMap<HookId, Cost>,
}

impl CostModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// A model assigning the same cost to every modeled hook.
    pub fn uniform(cost: Cost) -> Self {
        let mut model = Self::new();
        for hook in HookId::ALL {
            model.set(hook, cost);
        }
        model
    }

    pub fn set(&mut self, hook: HookId, cost: Cost) -> &mut Self {
        self.per_hook_cost.insert(hook, cost);
        self
    }

    pub fn cost_of(&self, hook: HookId) -> Option<Cost> {
        self.per_hook_cost.get(&hook).copied()
    }
}

/// Sums the per-hook cost over the record's expanded hook sequence.
pub fn estimate_cost(rec: &SyscallRecord, model: &CostModel) -> Result<Cost, EventError> {
    let mut total = Cost::from_integer(0);
    for ev in expand_syscall(rec)? {
        let c = model
            .cost_of(ev.hook)
            .ok_or(EventError::MissingCost(ev.hook))?;
        total += c;
    }
    Ok(total)
}
