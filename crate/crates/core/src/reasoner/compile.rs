use std::collections::HashSet;

use super::ReasonError;
use crate::dsl::{Constraint, Pattern, RuleAst, Term};
use crate::fact::SchemaRegistry;

#[derive(Debug, Clone)]
pub(crate) struct Clause {
    pub alias: String,
    pub canonical: String,
    pub terms: Vec<Term>,
    pub min_conf: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Absent {
    pub canonical: String,
    pub terms: Vec<Term>,
    pub scope: Vec<usize>,
    pub pad: u64,
}

#[derive(Debug, Clone)]
pub(crate) enum Check {
    /// Temporal constraint between two clause indexes.
    Temporal(Constraint, usize, usize),
    /// Value constraint; evaluated once every variable in it is bound.
    Value(Constraint),
}

/// A rule resolved against a registry, with a fixed clause evaluation order.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub(crate) ast: RuleAst,
    pub(crate) clauses: Vec<Clause>,
    pub(crate) absents: Vec<Absent>,
    /// Clause indexes in evaluation order.
    pub(crate) plan: Vec<usize>,
    /// Hard checks to run after plan step `i` binds its clause.
    pub(crate) hard_at: Vec<Vec<Check>>,
    pub(crate) soft: Vec<Check>,
    pub(crate) anchor: usize,
}

impl CompiledRule {
    pub fn ast(&self) -> &RuleAst {
        &self.ast
    }

    pub fn name(&self) -> &str {
        &self.ast.name
    }

    pub fn construct(&self) -> &str {
        &self.ast.construct
    }

    /// Clause aliases in evaluation order.
    pub fn plan(&self) -> Vec<&str> {
        self.plan
            .iter()
            .map(|&i| self.clauses[i].alias.as_str())
            .collect()
    }
}

fn resolve(
    rule: &str,
    pattern: &Pattern,
    registry: &SchemaRegistry,
) -> Result<String, ReasonError> {
    let spec = registry
        .spec(&pattern.predicate)
        .ok_or_else(|| ReasonError::UnknownPredicate {
            rule: rule.to_string(),
            predicate: pattern.predicate.clone(),
        })?;
    if spec.field_count() != pattern.terms.len() {
        return Err(ReasonError::PatternArity {
            rule: rule.to_string(),
            pattern: pattern.to_string(),
            predicate: pattern.predicate.clone(),
            expected: spec.field_count(),
            found: pattern.terms.len(),
        });
    }
    Ok(registry.canonical(&pattern.predicate).to_string())
}

fn index_of(clauses: &[Clause], alias: &str) -> usize {
    clauses
        .iter()
        .position(|c| c.alias == alias)
        .expect("parser rejects unknown aliases")
}

fn constants(c: &Clause) -> usize {
    c.terms
        .iter()
        .filter(|t| matches!(t, Term::Const(_)))
        .count()
}

/// Greedy join order: start from the most selective clause, then keep picking
/// clauses connected to what is already bound.
fn plan_order(clauses: &[Clause], links: &[(usize, usize)]) -> Vec<usize> {
    let mut order: Vec<usize> = Vec::with_capacity(clauses.len());
    let mut bound_vars: HashSet<&str> = HashSet::new();
    while order.len() < clauses.len() {
        let best = (0..clauses.len())
            .filter(|i| !order.contains(i))
            .max_by_key(|&i| {
                let c = &clauses[i];
                let shared = c
                    .terms
                    .iter()
                    .filter(|t| matches!(t, Term::Var(v) if bound_vars.contains(v.as_str())))
                    .count();
                let linked = links
                    .iter()
                    .filter(|&&(a, b)| {
                        (a == i && order.contains(&b)) || (b == i && order.contains(&a))
                    })
                    .count();
                // a temporal link narrows candidates to a window, so it outranks constants;
                // max_by_key keeps the last maximum, so negate the index to prefer source order
                (
                    linked.min(1),
                    constants(c) + shared,
                    linked,
                    std::cmp::Reverse(i),
                )
            })
            .expect("an unplanned clause remains");
        for t in &clauses[best].terms {
            if let Term::Var(v) = t {
                bound_vars.insert(v);
            }
        }
        order.push(best);
    }
    order
}

pub fn compile_rule(ast: &RuleAst, registry: &SchemaRegistry) -> Result<CompiledRule, ReasonError> {
    let mut clauses = Vec::with_capacity(ast.matches.len());
    for m in &ast.matches {
        clauses.push(Clause {
            alias: m.alias.clone(),
            canonical: resolve(&ast.name, &m.pattern, registry)?,
            terms: m.pattern.terms.clone(),
            min_conf: m.min_conf.unwrap_or(0.0),
            weight: ast.weight(&m.alias),
        });
    }
    let mut absents = Vec::with_capacity(ast.absents.len());
    for a in &ast.absents {
        absents.push(Absent {
            canonical: resolve(&ast.name, &a.pattern, registry)?,
            terms: a.pattern.terms.clone(),
            scope: a
                .scope
                .aliases
                .iter()
                .map(|s| index_of(&clauses, s))
                .collect(),
            pad: a.scope.pad,
        });
    }

    let mut links = Vec::new();
    let mut hard = Vec::new();
    let mut soft = Vec::new();
    for w in &ast.constraints {
        let check = if w.constraint.is_temporal() {
            let al = w.constraint.aliases();
            let (a, b) = (index_of(&clauses, al[0]), index_of(&clauses, al[1]));
            if !w.soft {
                links.push((a, b));
            }
            Check::Temporal(w.constraint.clone(), a, b)
        } else {
            Check::Value(w.constraint.clone())
        };
        if w.soft {
            soft.push(check);
        } else {
            hard.push(check);
        }
    }

    let plan = plan_order(&clauses, &links);
    let mut hard_at: Vec<Vec<Check>> = vec![Vec::new(); plan.len()];
    for check in hard {
        let step = match &check {
            Check::Temporal(_, a, b) => {
                let pa = plan.iter().position(|x| x == a).unwrap_or(0);
                let pb = plan.iter().position(|x| x == b).unwrap_or(0);
                pa.max(pb)
            }
            Check::Value(c) => {
                let vars = c.variables();
                (0..plan.len())
                    .find(|&s| {
                        vars.iter().all(|v| {
                            plan[..=s].iter().any(|&ci| {
                                clauses[ci]
                                    .terms
                                    .iter()
                                    .any(|t| matches!(t, Term::Var(x) if x == v))
                            })
                        })
                    })
                    .unwrap_or(plan.len().saturating_sub(1))
            }
        };
        if let Some(slot) = hard_at.get_mut(step) {
            slot.push(check);
        }
    }

    let anchor = ast
        .anchor
        .as_deref()
        .map(|a| index_of(&clauses, a))
        .unwrap_or(0);

    Ok(CompiledRule {
        ast: ast.clone(),
        clauses,
        absents,
        plan,
        hard_at,
        soft,
        anchor,
    })
}

pub fn compile_rules(
    rules: &[RuleAst],
    registry: &SchemaRegistry,
) -> Result<Vec<CompiledRule>, ReasonError> {
    rules.iter().map(|r| compile_rule(r, registry)).collect()
}
