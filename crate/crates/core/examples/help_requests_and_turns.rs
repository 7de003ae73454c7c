//! Aggregate queries: who asked for help after a prompt, and how evenly
//! turns are spread within each group.

use classlogic::dsl::{parse_facts, parse_query};
use classlogic::fact::{FactId, FactStore, SchemaRegistry};
use classlogic::query::execute_query;

const FACTS: &str = "
EVENT(teacher, open_question, class, 10, 1.0) @{id=prompt}
UTTER(student_1, help_request, step, 12, 0.9)
UTTER(student_2, help_request, step, 14, 0.9)
UTTER(student_1, help_request, step, 16, 0.8)
UTTER(student_3, help_request, step, 5, 0.9)
REL(student_1, member_of, group_1, [0,100], 1.0)
REL(student_2, member_of, group_1, [0,100], 1.0)
REL(student_3, member_of, group_2, [0,100], 1.0)
REL(student_4, member_of, group_2, [0,100], 1.0)
EVENT(student_1, speak_turn, group_1, [20,24], 0.9)
EVENT(student_2, speak_turn, group_1, [26,29], 0.9)
EVENT(student_1, speak_turn, group_1, [31,33], 0.9)
EVENT(student_3, speak_turn, group_2, [20,30], 0.9)
EVENT(student_3, speak_turn, group_2, [35,40], 0.9)
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::default_classroom();
    let (facts, errors) = parse_facts(FACTS);
    assert!(errors.is_empty(), "{errors:?}");
    let store = FactStore::from_facts(facts, &reg)?;
    let prompt = store.by_id(&FactId("prompt".into())).expect("annotated id");

    let queries = [
        (
            "COUNT_DISTINCT actor FROM EVENT(?, help_request, ?) WHERE after(this, anchor)",
            Some(prompt),
        ),
        ("GROUP_COUNT actor FROM EVENT(?, help_request, ?)", None),
        ("RANK group BY balance FROM EVENT(?, speak_turn, ?)", None),
    ];
    for (text, anchor) in queries {
        let q = parse_query(text)?;
        let r = execute_query(&q, &store, &reg, anchor)?;
        println!("{text}");
        print!("{}", r.to_table());
        println!();
    }
    Ok(())
}
