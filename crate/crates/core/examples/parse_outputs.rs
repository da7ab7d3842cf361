//! Feeds typical model replies through the step, selection and judge
//! parsers and prints the decisions or errors.

use cov_core::protocol::{parse_judge_score, parse_selection, parse_step, SelectionMode};

fn main() {
    let replies = [
        "THINK: The lamp should be left of the bed.\nACTION: yaw left",
        "**Action:** go forward",
        "ACTION: switch to view 1",
        "ACTION: switch to view 9",
        "THINK: Found it.\nANSWER: a white lamp",
        "ACTION: somersault",
        "I believe it is a lamp.",
    ];
    for r in replies {
        match parse_step(r, 3) {
            Ok(d) => println!("{:<55} -> {:?}", r.replace('\n', " | "), d.decision),
            Err(e) => println!("{:<55} -> error: {e}", r.replace('\n', " | ")),
        }
    }
    println!();
    for s in ["SELECT: 4, 0, 4", "Frames 2 and 7 look useful.", "SELECT: 40"] {
        for mode in [SelectionMode::Strict, SelectionMode::Lenient] {
            println!("{s:<30} {mode:?}: {:?}", parse_selection(s, 10, 6, mode));
        }
    }
    println!();
    for s in ["4", "Score: 5/5", "3.5", "I'd say 2."] {
        println!("{s:<12} -> {:?}", parse_judge_score(s));
    }
}
