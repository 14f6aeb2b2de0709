//! Reference rule checker written from the rule descriptions alone, by
//! exhaustive per-rule enumeration over plain strings. Shares no code with
//! the engine under test.

const BANK: [(&str, bool); 9] = [
    ("IUPAC", true),
    ("Formula", true),
    ("MolecularWeight", false),
    ("XLogP", false),
    ("HBondDonors", false),
    ("HBondAcceptors", false),
    ("RotatableBonds", false),
    ("PSA", false),
    ("Synonyms", true),
];

const FRONTIER: [&str; 3] = ["homo", "lumo", "gap"];
const SCALING_PROXIES: [&str; 2] = ["Formula", "XLogP"];
const POLARITY_GROUP: [&str; 3] = ["HBondDonors", "HBondAcceptors", "PSA"];

fn lookup(name: &str) -> Option<bool> {
    BANK.iter().find(|(n, _)| *n == name).map(|(_, textual)| *textual)
}

/// Violation identities `(code, subject)`, sorted.
pub fn check(names: &[String], weights: &[f64], target: &str) -> Vec<(String, Option<String>)> {
    let mut found: Vec<(String, Option<String>)> = Vec::new();
    let mut add = |code: &str, subject: Option<String>| {
        let item = (code.to_string(), subject);
        if !found.contains(&item) {
            found.push(item);
        }
    };

    if names.len() < 3 || names.len() > 5 {
        add("cardinality", None);
    }
    if weights.len() != names.len() {
        add("weight_count", None);
    }
    for w in weights {
        if *w < 0.0 {
            add("negative_weight", None);
        }
    }
    let mut total = 0.0;
    for w in weights {
        total += *w;
    }
    if !((total - 1.0).abs() <= 1e-3) {
        add("weight_sum", None);
    }

    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            if names[i] == names[j] {
                add("duplicate", Some(names[i].clone()));
            }
        }
    }

    let mut textual_count = 0;
    for n in names {
        match lookup(n) {
            None => add("unknown_descriptor", Some(n.clone())),
            Some(true) => textual_count += 1,
            Some(false) => {}
        }
    }
    let every_one_textual = !names.is_empty() && textual_count == names.len();
    if every_one_textual {
        add("all_textual", None);
    } else {
        for n in names {
            if lookup(n) == Some(true) {
                add("weak_relevance", Some(n.clone()));
            }
        }
    }

    if FRONTIER.contains(&target) && !names.iter().any(|n| SCALING_PROXIES.contains(&n.as_str())) {
        add("scaling", Some(target.to_string()));
    }

    let group_complete = POLARITY_GROUP.iter().all(|g| names.iter().any(|n| n == g));
    if group_complete && names.len() == 3 {
        add("overlapping_evidence", Some(POLARITY_GROUP.join("+")));
    }

    found.sort();
    found
}
