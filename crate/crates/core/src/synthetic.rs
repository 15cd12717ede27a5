//! A small templated event corpus with ten event types, used by the examples and tests.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, EventRecord};
use crate::ontology::{parse_ontology, Ontology};
use crate::tags::{Span, SpanSet};
use crate::training::TrainConfig;

pub const FIXTURE_SEED: u64 = 7;
pub const FIXTURE_DOCS: usize = 50;

pub const ONTOLOGY: &str = "\
# Ten event types with bleached definitions.
Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] in [place|some place] at [time|some time]
Life:Marry :: [person|some people] married in [place|some place] at [time|some time]
Life:Injure :: [agent|someone] injured [victim|someone else] with [instrument|something] in [place|some place]
Conflict:Attack :: [attacker|someone] attacked [target|something] in [place|some place] at [time|some time]
Justice:Arrest-Jail :: [agent|someone] arrested [person|someone else] in [place|some place] at [time|some time]
Movement:Transport :: [artifact|someone] traveled to [destination|some place] from [origin|some other place]
Transaction:Transfer-Money :: [giver|someone] paid [recipient|someone else] [money|some amount]
Personnel:Elect :: [entity|someone] elected [person|someone else] as [position|some position] at [time|some time]
Business:Start-Org :: [agent|someone] founded [org|some organization] in [place|some place]
Contact:Meet :: [entity|some people] met in [place|some place] at [time|some time]
";

pub fn ontology() -> Ontology {
    parse_ontology(ONTOLOGY).expect("fixture ontology is valid")
}

const PEOPLE: &[&str] = &[
    "Kim", "Pat", "Lee", "Maria Lopez", "the soldier", "a man", "the mayor", "two officers", "Ahmed", "the driver",
    "a journalist", "John Smith",
];
const GROUPS: &[&str] = &["coalition forces", "the rebels", "police", "the army", "local militia", "the guards"];
const PLACES: &[&str] = &[
    "Baghdad", "a checkpoint", "the village", "Paris", "the capital", "Cairo", "the market", "Boston",
];
const TIMES: &[&str] = &["Saturday", "Sunday", "Monday", "last week", "Friday night", "dawn"];
const WEAPONS: &[&str] = &["a rifle", "a knife", "a car bomb", "grenades", "a pistol"];
const TARGETS: &[&str] = &["the embassy", "a convoy", "the base", "the bridge", "a hotel"];
const AMOUNTS: &[&str] = &["$ 5 million", "200 dollars", "a large sum", "$ 40,000"];
const ORGS: &[&str] = &["a bank", "the startup", "a newspaper", "a charity", "the company"];
const POSITIONS: &[&str] = &["president", "mayor", "chairman", "governor"];

/// Template tokens: `{role:pool}` is an argument drawn from a pool,
/// `<word>` is the trigger, anything else is literal.
struct Template {
    event_type: &'static str,
    pattern: &'static str,
}

const TEMPLATES: &[Template] = &[
    Template { event_type: "Life:Die", pattern: "On {time:T} , {agent:G} <killed> {victim:P} at {place:L} ." },
    Template { event_type: "Life:Die", pattern: "{victim:P} was <killed> with {instrument:W} in {place:L} ." },
    Template { event_type: "Life:Die", pattern: "{agent:G} <killed> {victim:P} with {instrument:W} ." },
    Template { event_type: "Life:Marry", pattern: "{person:P} and {person:P} <married> {time:T} ." },
    Template { event_type: "Life:Marry", pattern: "{person:P} <married> {person:P} in {place:L} ." },
    Template { event_type: "Life:Injure", pattern: "{agent:G} <injured> {victim:P} with {instrument:W} in {place:L} ." },
    Template { event_type: "Life:Injure", pattern: "{victim:P} was <injured> in {place:L} ." },
    Template { event_type: "Conflict:Attack", pattern: "{attacker:G} <attacked> {target:X} in {place:L} on {time:T} ." },
    Template { event_type: "Conflict:Attack", pattern: "On {time:T} {attacker:G} <attacked> {target:X} ." },
    Template { event_type: "Justice:Arrest-Jail", pattern: "{agent:G} <arrested> {person:P} in {place:L} on {time:T} ." },
    Template { event_type: "Justice:Arrest-Jail", pattern: "{person:P} was <arrested> by {agent:G} ." },
    Template { event_type: "Movement:Transport", pattern: "{artifact:P} <traveled> to {destination:L} from {origin:L} ." },
    Template { event_type: "Movement:Transport", pattern: "{artifact:P} <traveled> from {origin:L} to {destination:L} ." },
    Template { event_type: "Transaction:Transfer-Money", pattern: "{giver:P} <paid> {recipient:P} {money:M} ." },
    Template { event_type: "Transaction:Transfer-Money", pattern: "{giver:O} <paid> {money:M} to {recipient:P} ." },
    Template { event_type: "Personnel:Elect", pattern: "Voters <elected> {person:P} as {position:R} ." },
    Template { event_type: "Personnel:Elect", pattern: "{entity:G} <elected> {person:P} as {position:R} on {time:T} ." },
    Template { event_type: "Business:Start-Org", pattern: "{agent:P} <founded> {org:O} in {place:L} ." },
    Template { event_type: "Business:Start-Org", pattern: "In {place:L} , {agent:P} <founded> {org:O} ." },
    Template { event_type: "Contact:Meet", pattern: "{entity:P} and {entity:P} <met> in {place:L} on {time:T} ." },
    Template { event_type: "Contact:Meet", pattern: "{entity:G} <met> at {place:L} ." },
];

fn pool(code: char) -> &'static [&'static str] {
    match code {
        'P' => PEOPLE,
        'G' => GROUPS,
        'L' => PLACES,
        'T' => TIMES,
        'W' => WEAPONS,
        'X' => TARGETS,
        'M' => AMOUNTS,
        'O' => ORGS,
        'R' => POSITIONS,
        _ => panic!("unknown pool {code}"),
    }
}

/// Tokens, trigger span and arguments for one filled template (sentence-local offsets).
fn fill<R: Rng>(t: &Template, rng: &mut R) -> (Vec<String>, EventRecord) {
    let mut tokens: Vec<String> = Vec::new();
    let mut trigger = None;
    let mut args: BTreeMap<String, Vec<Span>> = BTreeMap::new();
    let mut used: Vec<&str> = Vec::new();
    for piece in t.pattern.split_whitespace() {
        if let Some(inner) = piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
            let (role, code) = inner.split_once(':').expect("template slot has a pool");
            let choices: Vec<&&str> = pool(code.chars().next().unwrap()).iter().filter(|c| !used.contains(c)).collect();
            let filler = **choices.choose(rng).expect("pool not exhausted");
            used.push(filler);
            let start = tokens.len() + 1;
            tokens.extend(filler.split_whitespace().map(String::from));
            args.entry(role.to_string()).or_default().push(Span::new(start, tokens.len() + 1));
        } else if let Some(w) = piece.strip_prefix('<').and_then(|p| p.strip_suffix('>')) {
            tokens.push(w.to_string());
            trigger = Some(Span::new(tokens.len(), tokens.len() + 1));
        } else {
            tokens.push(piece.to_string());
        }
    }
    let arguments = args
        .into_iter()
        .map(|(r, s)| (r, SpanSet::new(s).expect("template spans are disjoint")))
        .collect();
    let ev = EventRecord {
        event_type: t.event_type.to_string(),
        trigger: trigger.expect("template has a trigger"),
        arguments,
    };
    (tokens, ev)
}

fn capitalize(tokens: &mut [String]) {
    if let Some(first) = tokens.first_mut() {
        let mut cs = first.chars();
        if let Some(c) = cs.next() {
            *first = c.to_uppercase().chain(cs).collect();
        }
    }
}

fn shift(ev: &EventRecord, by: usize) -> EventRecord {
    let by = by as isize;
    EventRecord {
        event_type: ev.event_type.clone(),
        trigger: ev.trigger.shift(by),
        arguments: ev
            .arguments
            .iter()
            .map(|(r, s)| (r.clone(), SpanSet::new(s.iter().map(|x| x.shift(by)).collect()).unwrap()))
            .collect(),
    }
}

/// Builds a document from sentence-local pieces.
fn assemble(doc_id: String, sentences: Vec<(Vec<String>, Vec<EventRecord>)>) -> Document {
    let mut doc = Document {
        doc_id,
        tokens: Vec::new(),
        events: Vec::new(),
        sentences: Some(Vec::new()),
    };
    for (tokens, events) in sentences {
        let off = doc.tokens.len();
        doc.events.extend(events.iter().map(|e| shift(e, off)));
        doc.tokens.extend(tokens);
        doc.sentences.as_mut().unwrap().push(Span::new(off + 1, doc.tokens.len() + 1));
    }
    doc
}

fn sentence(text: &str, events: Vec<EventRecord>) -> (Vec<String>, Vec<EventRecord>) {
    (text.split_whitespace().map(String::from).collect(), events)
}

fn event(ty: &str, trigger: (usize, usize), args: &[(&str, &[(usize, usize)])]) -> EventRecord {
    EventRecord {
        event_type: ty.into(),
        trigger: trigger.into(),
        arguments: args
            .iter()
            .map(|(r, s)| (r.to_string(), SpanSet::new(s.iter().map(|&x| x.into()).collect()).unwrap()))
            .collect(),
    }
}

/// Hand-written documents covering the cases the templates do not.
pub fn handwritten() -> Vec<Document> {
    vec![
        assemble(
            "fixed-0".into(),
            vec![sentence(
                "On Saturday , coalition forces killed a man at a checkpoint .",
                vec![event(
                    "Life:Die",
                    (6, 7),
                    &[("agent", &[(4, 6)]), ("victim", &[(7, 9)]), ("place", &[(10, 12)]), ("time", &[(2, 3)])],
                )],
            )],
        ),
        assemble(
            "fixed-1".into(),
            vec![
                sentence(
                    "Kim and Pat married Sunday .",
                    vec![event("Life:Marry", (4, 5), &[("person", &[(1, 2), (3, 4)]), ("time", &[(5, 6)])])],
                ),
                sentence("The weather was calm .", vec![]),
            ],
        ),
        assemble(
            "fixed-2".into(),
            vec![sentence(
                "A car bomb killed two officers and later killed the driver .",
                vec![
                    event("Life:Die", (4, 5), &[("instrument", &[(1, 4)]), ("victim", &[(5, 7)])]),
                    event("Life:Die", (9, 10), &[("instrument", &[(1, 4)]), ("victim", &[(10, 12)])]),
                ],
            )],
        ),
    ]
}

/// The fixture corpus: hand-written documents followed by templated ones,
/// each with one to three sentences, one event per sentence.
pub fn corpus(n_docs: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = handwritten();
    docs.truncate(n_docs);
    // Cycle through templates so every type is covered evenly.
    let mut order: Vec<usize> = Vec::new();
    let mut k = docs.len();
    while docs.len() < n_docs {
        let n_sent = rng.gen_range(1..=3);
        let mut sents = Vec::new();
        for _ in 0..n_sent {
            if order.is_empty() {
                order = (0..TEMPLATES.len()).collect();
                order.shuffle(&mut rng);
            }
            let t = &TEMPLATES[order.pop().unwrap()];
            let (mut tokens, ev) = fill(t, &mut rng);
            capitalize(&mut tokens);
            sents.push((tokens, vec![ev]));
        }
        docs.push(assemble(format!("doc-{k:03}"), sents));
        k += 1;
    }
    docs
}

/// Optimiser settings that fit the fixture with the default mini encoder.
pub fn fixture_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 5e-4,
        batch_size: 4,
        ..TrainConfig::finetune()
    }
}

pub fn fixture() -> (Ontology, Vec<Document>) {
    (ontology(), corpus(FIXTURE_DOCS, FIXTURE_SEED))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::generate_examples;
    use std::collections::BTreeSet;

    #[test]
    fn fixture_is_valid_and_covers_all_types() {
        let (o, docs) = fixture();
        assert_eq!(o.len(), 10);
        assert_eq!(docs.len(), FIXTURE_DOCS);
        for d in &docs {
            d.validate().unwrap();
        }
        let types: BTreeSet<_> = docs.iter().flat_map(|d| d.event_types()).collect();
        assert_eq!(types.len(), 10);
        generate_examples(&o, &docs).unwrap();
    }

    #[test]
    fn deterministic() {
        assert_eq!(corpus(20, 3), corpus(20, 3));
        assert_ne!(corpus(20, 3), corpus(20, 4));
    }

    #[test]
    fn checkpoint_sentence_arguments() {
        let d = &handwritten()[0];
        let e = &d.events[0];
        let words = |s: &SpanSet| s.iter().map(|x| x.text(&d.tokens).join(" ")).collect::<Vec<_>>();
        assert_eq!(words(&e.arguments["agent"]), ["coalition forces"]);
        assert_eq!(words(&e.arguments["victim"]), ["a man"]);
        assert_eq!(words(&e.arguments["place"]), ["a checkpoint"]);
        assert_eq!(words(&e.arguments["time"]), ["Saturday"]);
        assert!(!e.arguments.contains_key("instrument"));
        assert_eq!(e.trigger.text(&d.tokens), ["killed"]);
    }
}
