//! Seeded synthetic corpora.
//!
//! The generator produces four record families, each carrying only the
//! labels it is meant for: emergency chats, single messages labelled as
//! question or statement, staged consultation prefixes labelled for
//! readiness, and specialty chats with per-expert label sets. The same
//! seed always yields the same corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnnotatedChat;
use crate::transcript::Transcript;

/// Phrases that mark a chat as critical in the generated corpus.
pub const CRITICAL_WORDS: &[&str] = &[
    "chest pain",
    "vision",
    "shortness of breath",
    "numbness",
    "fainted",
    "bleeding",
    "slurred speech",
    "unconscious",
];

const GREETING: &str = "What's bothering you?";

const COMPLAINTS: &[&str] = &[
    "I have a headache.",
    "My stomach hurts after meals.",
    "I have a sore throat.",
    "My back aches in the morning.",
    "I have a runny nose and sneezing.",
    "My knee hurts when I climb stairs.",
    "I feel tired all the time.",
    "I have a rash on my arm.",
    "I have trouble sleeping.",
    "My ear hurts.",
    "High blood pressure.",
    "I have a cough.",
];

const BENIGN_QUESTIONS: &[&str] = &[
    "Where exactly is the pain located?",
    "How long have you had these symptoms?",
    "Are you experiencing any other symptoms, such as nausea or vomiting?",
    "How intense is the pain?",
    "Do you have a fever?",
    "Does anything make it better or worse?",
    "Have you taken any medication for it?",
    "Did this start suddenly or gradually?",
];

const BENIGN_ANSWERS: &[&str] = &[
    "No.",
    "About three days.",
    "5 out of 10.",
    "The back of my head.",
    "It gets worse in the evening.",
    "I took some ibuprofen.",
    "Gradually.",
    "A little nausea.",
    "Not really.",
];

const CRITICAL_PROBES: &[&str] = &[
    "Do you experience chest pain or an increased heart rate?",
    "Do you have any vision problems?",
    "Do you have shortness of breath?",
    "Do you feel numbness in your arms or face?",
    "Have you fainted recently?",
    "Is there any bleeding?",
];

const QUESTION_MESSAGES: &[&str] = &[
    "Who are you?",
    "What can you help me with?",
    "What is a migraine?",
    "Can you explain what blood pressure means?",
    "How do I know if I need a doctor?",
    "Is it dangerous to take ibuprofen every day?",
    "Should I see a neurologist?",
    "Why does my head hurt when I cough?",
    "What does a cardiologist do?",
    "Can I take paracetamol with antibiotics?",
    "How long does a cold usually last?",
    "What should I do about insomnia?",
    "Are you a real doctor?",
    "Could you tell me what causes back pain?",
    "Which specialist treats skin problems?",
    "Is a fever of 38 degrees dangerous?",
    "Do I need an appointment?",
    "What are the symptoms of flu?",
    "How can you help me?",
    "Where can I get a blood test?",
];

const STATEMENT_MESSAGES: &[&str] = &[
    "I have a headache.",
    "The back of my head.",
    "No.",
    "Yes.",
    "5 out of 10.",
    "High blood pressure.",
    "It started two days ago.",
    "My throat is sore.",
    "I feel dizzy in the mornings.",
    "The pain is sharp.",
    "My temperature was 37.5 yesterday.",
    "I have had this rash for a week.",
    "Only at night.",
    "A little nausea.",
    "7 out of 10.",
    "It hurts on the left side.",
    "I took aspirin.",
    "My stomach hurts after meals.",
    "Not really.",
    "Sometimes.",
];

const SPECIALTIES: &[&str] = &[
    "General practitioner",
    "Neurologist",
    "Cardiologist",
    "Gastroenterologist",
    "Dermatologist",
    "Otolaryngologist",
    "Endocrinologist",
    "Pulmonologist",
    "Orthopedist",
    "Urologist",
    "Gynecologist",
    "Ophthalmologist",
    "Psychiatrist",
    "Rheumatologist",
    "Allergist",
    "Nephrologist",
    "Oncologist",
    "Hematologist",
    "Infectious disease specialist",
    "Surgeon",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub emergency_chats: usize,
    /// Share of emergency chats that are critical.
    pub critical_rate: f64,
    /// Probability that the recorded criticality flag disagrees with the label.
    pub flag_noise: f64,
    pub question_messages: usize,
    pub readiness_dialogues: usize,
    pub readiness_turns_min: u32,
    pub readiness_turns_max: u32,
    pub specialty_chats: usize,
    pub experts: usize,
    pub k: usize,
    /// Probability that a label slot comes from the chat's shared set.
    pub agreement: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            emergency_chats: 200,
            critical_rate: 0.3,
            flag_noise: 0.05,
            question_messages: 200,
            readiness_dialogues: 60,
            readiness_turns_min: 4,
            readiness_turns_max: 4,
            specialty_chats: 100,
            experts: 2,
            k: 3,
            agreement: 0.7,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).copied().unwrap_or_default()
}

/// Critical chats confirm two distinct red flags; benign chats raise at most
/// one, answered either way.
fn emergency_chat(rng: &mut ChaCha8Rng, id: usize, spec: &FixtureSpec) -> AnnotatedChat {
    let critical = rng.gen_bool(spec.critical_rate.clamp(0.0, 1.0));
    let mut t = Transcript::new();
    t.push_system(GREETING);
    t.push_user(pick(rng, COMPLAINTS));
    let turns = rng.gen_range(2..=3);
    let flags: Vec<&str> = if critical {
        CRITICAL_PROBES.choose_multiple(rng, 2).copied().collect()
    } else if rng.gen_bool(0.5) {
        vec![pick(rng, CRITICAL_PROBES)]
    } else {
        Vec::new()
    };
    let mut slots: Vec<usize> = (0..turns).collect();
    slots.shuffle(rng);
    slots.truncate(flags.len());
    slots.sort_unstable();
    for i in 0..turns {
        match slots.iter().position(|&s| s == i) {
            Some(k) => {
                t.push_system(flags[k]);
                t.push_user(if critical || rng.gen_bool(0.5) { "Yes." } else { "No." });
            }
            None => {
                t.push_system(pick(rng, BENIGN_QUESTIONS));
                t.push_user(pick(rng, BENIGN_ANSWERS));
            }
        }
    }
    let llm_flag = critical != rng.gen_bool(spec.flag_noise.clamp(0.0, 1.0));
    AnnotatedChat {
        id: format!("emergency-{id:04}"),
        transcript: t,
        emergency: Some(critical),
        llm_flag: Some(llm_flag),
        ..Default::default()
    }
}

fn question_chat(rng: &mut ChaCha8Rng, id: usize) -> AnnotatedChat {
    let question = rng.gen_bool(0.5);
    let text = if question { pick(rng, QUESTION_MESSAGES) } else { pick(rng, STATEMENT_MESSAGES) };
    let mut t = Transcript::new();
    t.push_user(text);
    AnnotatedChat { id: format!("question-{id:04}"), transcript: t, question: Some(question), ..Default::default() }
}

/// Every prefix of one consultation, including turns past readiness.
fn readiness_chats(rng: &mut ChaCha8Rng, id: usize, spec: &FixtureSpec) -> Vec<AnnotatedChat> {
    let lo = spec.readiness_turns_min.max(1);
    let hi = spec.readiness_turns_max.max(lo);
    let needed = rng.gen_range(lo..=hi);
    let extra = rng.gen_range(0..=2);
    let mut t = Transcript::new();
    let mut out = Vec::new();
    t.push_system(GREETING);
    t.push_user(pick(rng, COMPLAINTS));
    for turn in 1..=needed + extra {
        if turn > 1 {
            t.push_system(pick(rng, BENIGN_QUESTIONS));
            t.push_user(pick(rng, BENIGN_ANSWERS));
        }
        out.push(AnnotatedChat {
            id: format!("readiness-{id:04}-{turn}"),
            transcript: t.clone(),
            ready: Some(turn >= needed),
            anamnesis_turns: Some(needed),
            ..Default::default()
        });
    }
    out
}

fn label_set(rng: &mut ChaCha8Rng, shared: &[&str], distractors: &[&str], k: usize, agreement: f64) -> Vec<String> {
    (0..k)
        .map(|i| {
            if rng.gen_bool(agreement) {
                shared[i % shared.len()].to_string()
            } else {
                pick(rng, distractors).to_string()
            }
        })
        .collect()
}

fn specialty_chat(rng: &mut ChaCha8Rng, id: usize, spec: &FixtureSpec, shared_pool: &[&str], pools: &[Vec<&str>]) -> AnnotatedChat {
    let k = spec.k.max(1);
    let mut shared = shared_pool.to_vec();
    shared.shuffle(rng);
    shared.truncate(k);
    let agreement = spec.agreement.clamp(0.0, 1.0);
    let experts = (0..spec.experts).map(|e| label_set(rng, &shared, &pools[e + 1], k, agreement)).collect();
    let algorithm = label_set(rng, &shared, &pools[0], k, agreement);
    let mut t = Transcript::new();
    t.push_user(pick(rng, COMPLAINTS));
    AnnotatedChat {
        id: format!("specialty-{id:04}"),
        transcript: t,
        experts,
        algorithm: Some(algorithm),
        ..Default::default()
    }
}

/// Shared labels come from the first half of the specialty list; the rest
/// is split into disjoint distractor pools, one for the algorithm and one
/// per expert, so off-set slots never agree by accident.
fn specialty_pools(experts: usize, k: usize) -> (Vec<&'static str>, Vec<Vec<&'static str>>) {
    let shared_len = k.max(SPECIALTIES.len() / 2).min(SPECIALTIES.len() - 1);
    let (shared, rest) = SPECIALTIES.split_at(shared_len);
    let n = experts + 1;
    let mut pools = vec![Vec::new(); n];
    for (i, s) in rest.iter().enumerate() {
        pools[i % n].push(*s);
    }
    for (i, pool) in pools.iter_mut().enumerate() {
        if pool.is_empty() {
            pool.push(rest[i % rest.len()]);
        }
    }
    (shared.to_vec(), pools)
}

pub fn generate_fixtures(seed: u64, spec: &FixtureSpec) -> Vec<AnnotatedChat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..spec.emergency_chats {
        out.push(emergency_chat(&mut rng, i, spec));
    }
    for i in 0..spec.question_messages {
        out.push(question_chat(&mut rng, i));
    }
    for i in 0..spec.readiness_dialogues {
        out.extend(readiness_chats(&mut rng, i, spec));
    }
    let (shared, pools) = specialty_pools(spec.experts, spec.k);
    for i in 0..spec.specialty_chats {
        out.push(specialty_chat(&mut rng, i, spec, &shared, &pools));
    }
    out
}
