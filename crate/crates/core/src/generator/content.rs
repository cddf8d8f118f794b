//! Payload text for synthetic spans: news snippets, quotes, time series JSON,
//! summaries. Everything is built from integer draws and word lists.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

pub(crate) const TICKERS: &[(&str, &str)] = &[
    ("AAPL", "Apple"),
    ("MSFT", "Microsoft"),
    ("GOOGL", "Alphabet"),
    ("AMZN", "Amazon"),
    ("NVDA", "Nvidia"),
    ("META", "Meta Platforms"),
    ("TSLA", "Tesla"),
    ("JPM", "JPMorgan Chase"),
    ("XOM", "Exxon Mobil"),
    ("KO", "Coca-Cola"),
    ("PFE", "Pfizer"),
    ("INTC", "Intel"),
    ("NFLX", "Netflix"),
    ("DIS", "Disney"),
    ("BA", "Boeing"),
    ("WMT", "Walmart"),
    ("CVX", "Chevron"),
    ("ORCL", "Oracle"),
    ("AMD", "Advanced Micro Devices"),
    ("IBM", "IBM"),
];

const WORDS: &[&str] = &[
    "analysts",
    "expect",
    "quarterly",
    "revenue",
    "guidance",
    "margin",
    "growth",
    "decline",
    "shares",
    "investors",
    "rally",
    "selloff",
    "volatility",
    "earnings",
    "dividend",
    "buyback",
    "forecast",
    "outlook",
    "segment",
    "cloud",
    "devices",
    "advertising",
    "subscription",
    "supply",
    "chain",
    "inventory",
    "demand",
    "pricing",
    "regulators",
    "antitrust",
    "lawsuit",
    "settlement",
    "merger",
    "acquisition",
    "partnership",
    "launch",
    "product",
    "recall",
    "factory",
    "capacity",
    "semiconductor",
    "battery",
    "vehicle",
    "pharmaceutical",
    "trial",
    "approval",
    "streaming",
    "audience",
    "retail",
    "consumer",
    "spending",
    "inflation",
    "interest",
    "rates",
    "federal",
    "reserve",
    "treasury",
    "yield",
    "bond",
    "currency",
    "dollar",
    "euro",
    "export",
    "tariff",
    "china",
    "europe",
    "japan",
    "india",
    "brazil",
    "energy",
    "crude",
    "oil",
    "natural",
    "gas",
    "refinery",
    "drilling",
    "mining",
    "copper",
    "lithium",
    "gold",
    "silver",
    "wheat",
    "coffee",
    "shipping",
    "airline",
    "travel",
    "hotel",
    "restaurant",
    "banking",
    "lending",
    "deposits",
    "credit",
    "default",
    "insurance",
    "premium",
    "claims",
    "software",
    "security",
    "breach",
    "outage",
    "upgrade",
    "downgrade",
    "target",
    "overweight",
    "underweight",
    "neutral",
    "momentum",
    "resistance",
    "support",
    "breakout",
    "moving",
    "average",
    "volume",
    "turnover",
    "liquidity",
    "hedge",
    "fund",
    "pension",
    "index",
    "benchmark",
    "sector",
    "rotation",
    "defensive",
    "cyclical",
    "valuation",
    "multiple",
    "discount",
    "cash",
    "flow",
    "debt",
    "leverage",
    "restructuring",
    "layoffs",
    "hiring",
    "wages",
    "union",
    "strike",
    "weather",
    "hurricane",
    "drought",
    "harvest",
    "election",
    "policy",
    "stimulus",
    "budget",
    "deficit",
    "surplus",
    "patent",
    "license",
    "royalty",
    "spinoff",
    "listing",
    "delisting",
    "split",
    "reverse",
    "options",
    "futures",
    "contango",
    "backwardation",
    "arbitrage",
    "spread",
    "basis",
    "swap",
    "robotics",
    "automation",
    "satellite",
    "telecom",
    "broadband",
    "wireless",
    "chipmaker",
    "foundry",
    "datacenter",
    "server",
    "gaming",
    "console",
    "handset",
    "wearable",
    "biotech",
    "vaccine",
    "oncology",
    "diagnostic",
    "hospital",
    "medicare",
    "insulin",
    "generic",
    "brand",
    "beverage",
    "snack",
    "packaging",
    "aluminum",
    "steel",
    "lumber",
    "housing",
    "mortgage",
    "rent",
    "vacancy",
    "warehouse",
    "logistics",
    "freight",
    "railroad",
    "trucking",
    "pipeline",
    "solar",
    "wind",
    "nuclear",
    "hydrogen",
    "carbon",
    "emissions",
    "offset",
    "grid",
    "utility",
];

const TOPICS: &[&str] = &[
    "share price",
    "price comparison",
    "technical analysis",
    "price forecast",
    "latest news",
    "market trends",
];

const DAYS: &[&str] = &[
    "01", "04", "05", "06", "07", "08", "11", "12", "13", "14", "15", "18", "19", "20", "21", "22",
    "25", "26", "27", "28",
];

pub(crate) fn pick_ticker<R: Rng>(rng: &mut R) -> (&'static str, &'static str) {
    *TICKERS.choose(rng).expect("non-empty")
}

/// A ticker different from `other`.
pub(crate) fn other_ticker<R: Rng>(rng: &mut R, other: &str) -> (&'static str, &'static str) {
    loop {
        let t = pick_ticker(rng);
        if t.0 != other {
            return t;
        }
    }
}

pub(crate) fn words<R: Rng>(rng: &mut R, n: usize) -> String {
    (0..n)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn money<R: Rng>(rng: &mut R, lo: u32, hi: u32) -> String {
    let cents = rng.gen_range(lo * 100..hi * 100);
    format!("{}.{:02}", cents / 100, cents % 100)
}

pub(crate) fn user_prompt<R: Rng>(rng: &mut R, ticker: &str) -> String {
    let topic = TOPICS.choose(rng).expect("non-empty");
    format!(
        "What is the {topic} for {ticker}? Focus on {}.",
        words(rng, 3)
    )
}

pub(crate) fn agent_task<R: Rng>(rng: &mut R, agent: &str, ticker: &str) -> String {
    format!("{agent}: gather {} for {ticker}", words(rng, 2))
}

pub(crate) fn search_query<R: Rng>(rng: &mut R, company: &str) -> String {
    format!("{company} {}", words(rng, 3))
}

/// A news snippet: headline-ish lead followed by random body words.
pub(crate) fn news_snippet<R: Rng>(rng: &mut R, ticker: &str, company: &str) -> String {
    format!(
        "{company} ({ticker}) {}. {} {}.",
        words(rng, 4),
        words(rng, 6),
        words(rng, 5)
    )
}

pub(crate) fn price_quote<R: Rng>(rng: &mut R, ticker: &str) -> String {
    format!(
        "{ticker} last {} USD, change {}%, note: {}",
        money(rng, 20, 900),
        money(rng, 0, 6),
        words(rng, 7)
    )
}

/// Daily closes as JSON; dates follow a fixed calendar so two series over the
/// same window share almost all structure and differ only in the numbers.
pub(crate) fn timeseries_json<R: Rng>(
    rng: &mut R,
    ticker: &str,
    month: u32,
    days: usize,
) -> String {
    let mut out = format!("{{\"symbol\": \"{ticker}\", \"interval\": \"1d\", \"series\": [");
    let base = rng.gen_range(5_000u32..90_000);
    for (i, day) in DAYS.iter().take(days).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let close = base + rng.gen_range(0..2_000);
        let _ = write!(
            out,
            "{{\"date\": \"2024-{month:02}-{day}\", \"close\": {}.{:02}}}",
            close / 100,
            close % 100
        );
    }
    out.push_str("]}");
    out
}

pub(crate) fn summary<R: Rng>(rng: &mut R, ticker: &str) -> String {
    format!(
        "Summary for {ticker}: {}. {}.",
        words(rng, 7),
        words(rng, 6)
    )
}

pub(crate) fn final_answer<R: Rng>(rng: &mut R, ticker: &str) -> String {
    format!("Answer on {ticker}: {}. {}.", words(rng, 8), words(rng, 6))
}

pub(crate) fn agent_report<R: Rng>(rng: &mut R, agent: &str, ticker: &str) -> String {
    format!(
        "{agent} found for {ticker}: {}. {}.",
        words(rng, 6),
        words(rng, 6)
    )
}

/// Replaces `round(noise * len)` alphanumeric characters with another
/// character of the same class (digit for digit, letter for letter).
pub(crate) fn perturb<R: Rng>(rng: &mut R, text: &str, noise: f64) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let candidates: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_ascii_alphanumeric())
        .map(|(i, _)| i)
        .collect();
    let changes = ((noise * chars.len() as f64).round() as usize).min(candidates.len());
    for &pos in candidates.choose_multiple(rng, changes) {
        let c = chars[pos];
        chars[pos] = loop {
            let r = if c.is_ascii_digit() {
                char::from(b'0' + rng.gen_range(0..10))
            } else {
                char::from(b'a' + rng.gen_range(0..26))
            };
            if r != c.to_ascii_lowercase() {
                break r;
            }
        };
    }
    chars.into_iter().collect()
}
