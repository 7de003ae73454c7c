//! Negation as absence: an open floor is an opportunity for a student who is
//! oriented to the teacher and not already speaking, unless someone talks
//! over it.

use classlogic::dsl::{parse_facts, parse_rules};
use classlogic::fact::{FactStore, SchemaRegistry};
use classlogic::reasoner::{compile_rules, match_rule, SupportConfig};

const RULE: &str = "
RULE participation_opportunity
  CONCLUDE participation_opportunity(S) AT o
  MATCH f: EVENT(teacher, open_floor, ?)
  MATCH o: REL(S, oriented_to, teacher)
  ABSENT EVENT(S, speak_turn, ?) IN f
  ABSENT EVENT(?, overlapping_speech, ?) IN f
  WHERE during(f, o)
END
";

const FACTS: &str = "
CONTEXT(activity, whole_class_discussion, [0,400])
EVENT(teacher, open_floor, class, [100,110], 0.95)
REL(student_1, oriented_to, teacher, [90,130], 0.84)
REL(student_2, oriented_to, teacher, [95,120], 0.79)
EVENT(student_2, speak_turn, class, [104,108], 0.91)
REL(student_3, oriented_to, teacher, [105,140], 0.88)
EVENT(teacher, open_floor, class, [200,210], 0.93)
REL(student_1, oriented_to, teacher, [190,230], 0.86)
EVENT(student_5, overlapping_speech, class, [203,206], 0.72)
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reg = SchemaRegistry::default_classroom();
    let (facts, errors) = parse_facts(FACTS);
    assert!(errors.is_empty(), "{errors:?}");
    let store = FactStore::from_facts(facts, &reg)?;
    let rules = compile_rules(&parse_rules(RULE).0, &reg)?;

    // student_1 at the first floor only: student_2 spoke, student_3 turned
    // up late, and the second floor was talked over
    for h in match_rule(&rules[0], &store, &SupportConfig::default())? {
        println!(
            "{} {} over [{}, {}] support {:.4}",
            h.construct,
            h.subject(),
            h.time.start(),
            h.time.end(),
            h.norm_support
        );
    }
    Ok(())
}
