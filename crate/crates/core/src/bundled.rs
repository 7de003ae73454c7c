//! Rule, policy and fact texts shipped with the crate.

/// Confusion, participation and collaboration rules.
pub const RULES: &str = include_str!("../data/classroom.rules");

/// Cross-modal corroboration and context policies.
pub const POLICIES: &str = include_str!("../data/classroom.policies");

/// A five-fact listing around one help request.
pub const CONFUSION_FACTS: &str = include_str!("../data/confusion_prompt.facts");
