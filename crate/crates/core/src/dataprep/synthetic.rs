//! Generated labelled corpus with a planted signal: positive posts pair a
//! first-person subject and a suicide term with distressed wording;
//! negative posts mention the same terms in denial, third-person or
//! awareness contexts with upbeat wording.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::record::{Label, TweetRecord};

const POS_OPEN: &[&str] = &[
    "i can't do this anymore",
    "i feel so hopeless",
    "everything is pointless",
    "i am so tired of everything",
    "nobody would miss me",
    "i feel empty and alone",
    "i am a burden to everyone",
    "the pain never stops",
    "i feel trapped and broken",
    "i am exhausted and miserable",
];
const POS_CORE: &[&str] = &[
    "i want to end my life",
    "i want to die",
    "i keep thinking about suicide",
    "i keep thinking about killing myself",
    "i wish i was dead",
    "i am going to kill myself",
    "i have no reason to live",
    "i feel suicidal tonight",
    "i just want to end it all",
    "i think i will take my own life",
];
const POS_CLOSE: &[&str] = &[
    "",
    "nobody cares",
    "i'm so alone",
    "everything hurts",
    "i'm worthless",
    "it is all my fault",
    "i'm lost",
    "#depressed",
    "so much despair",
];
const NEG_DENIAL: &[&str] = &[
    "i will not commit suicide",
    "i would never kill myself",
    "i won't end my life",
    "i am not suicidal anymore",
    "i don't want to die",
    "i will never think about suicide again",
];
const NEG_THIRD: &[&str] = &[
    "my friend wrote a great article about suicide prevention",
    "she shared an inspiring story about suicide awareness",
    "the documentary about suicide was informative",
    "they organized a walk for suicide prevention",
    "proud of our community suicide prevention team",
    "his song about overdose recovery is beautiful",
    "people who talk openly about suicide save lives",
    "the news report on suicide rates was helpful",
];
const NEG_CLOSE: &[&str] = &[
    "life is good",
    "i love my family",
    "feeling grateful today",
    "things are getting better",
    "so proud",
    "what a wonderful community",
    "hope helps",
    "great work everyone",
    "#hope",
    "sending love and support",
];
const NOISE: &[&str] = &[
    "suicide attack reported near the market",
    "another suicide bomb in the capital today",
    "read about suicide prevention here http://example.org/help",
    "new article on suicide awareness www.example.com/story",
];
const OFF_TOPIC: &[&str] = &[
    "what a lovely sunny day at the beach",
    "just finished a great workout",
    "coffee and a good book this morning",
    "traffic is terrible today",
];

fn counts(rng: &mut ChaCha8Rng, positive: bool) -> [u64; 4] {
    let shift = if positive { -0.4 } else { 0.4 };
    let draw = |rng: &mut ChaCha8Rng, mu: f64| {
        let n = Normal::new(mu + shift, 1.0).expect("unit spread");
        n.sample(rng).exp().round() as u64
    };
    [
        draw(rng, 5.0),
        draw(rng, 2.0),
        draw(rng, 0.5),
        draw(rng, 1.0),
    ]
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty fragment list")
}

fn join(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|p| !p.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(", ")
}

fn timestamp(i: usize) -> String {
    format!(
        "2023-{:02}-{:02}T{:02}:{:02}:00Z",
        i / 28 % 12 + 1,
        i % 28 + 1,
        i % 24,
        i * 7 % 60
    )
}

fn record(i: usize, text: String, c: [u64; 4], label: Option<Label>) -> TweetRecord {
    TweetRecord {
        id: format!("syn-{i:05}"),
        text,
        followers: c[0],
        likes: c[1],
        replies: c[2],
        retweets: c[3],
        created_at: timestamp(i),
        label,
    }
}

/// `n_clean` labelled posts (half positive), followed by `n_noise` posts
/// that the keyword or noise filters should remove.
pub fn synthetic_corpus(n_clean: usize, n_noise: usize, seed: u64) -> Vec<TweetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = (0..n_clean).map(|i| i < n_clean / 2).collect();
    labels.shuffle(&mut rng);
    let mut out = Vec::with_capacity(n_clean + n_noise);
    for (i, &positive) in labels.iter().enumerate() {
        let text = if positive {
            let (a, b, c) = (
                pick(&mut rng, POS_OPEN),
                pick(&mut rng, POS_CORE),
                pick(&mut rng, POS_CLOSE),
            );
            if rng.gen_bool(0.5) {
                join(&[a, b, c])
            } else {
                join(&[b, a, c])
            }
        } else {
            let core = if rng.gen_bool(0.4) {
                pick(&mut rng, NEG_DENIAL)
            } else {
                pick(&mut rng, NEG_THIRD)
            };
            let (a, b) = (pick(&mut rng, NEG_CLOSE), pick(&mut rng, NEG_CLOSE));
            join(&[core, a, b])
        };
        let c = counts(&mut rng, positive);
        out.push(record(i, text, c, Some(Label::from_bool(positive))));
    }
    for j in 0..n_noise {
        let text = if j % 2 == 0 {
            pick(&mut rng, NOISE)
        } else {
            pick(&mut rng, OFF_TOPIC)
        };
        let c = counts(&mut rng, false);
        out.push(record(
            n_clean + j,
            text.to_string(),
            c,
            Some(Label::Negative),
        ));
    }
    out
}
