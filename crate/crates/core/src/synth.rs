//! Template-based synthetic corpora for offline runs.
//!
//! Benign mail is business correspondence, newsletters and personal notes.
//! Traditional phishing uses generic greetings, shortened or lookalike
//! links and account threats. Spear-like mail reuses the business
//! vocabulary (names, projects, documents) and carries its cues more
//! quietly: personal context, a signing request through a lookalike
//! portal, a same-day deadline. The SMS profile is short and informal.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label, Medium, Source};
use crate::error::{Error, Result};

pub const SMS_MAX_CHARS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthProfile {
    Email,
    Sms,
}

impl SynthProfile {
    pub fn labels(self) -> &'static [Label] {
        match self {
            SynthProfile::Email => &[Label::Ham, Label::Phishing, Label::SpearPhishing],
            SynthProfile::Sms => &[Label::Smishing, Label::BenignSms],
        }
    }
}

impl std::str::FromStr for SynthProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "email" => Ok(SynthProfile::Email),
            "sms" => Ok(SynthProfile::Sms),
            _ => Err(Error::invalid(format!("unknown profile `{s}` (email, sms)"))),
        }
    }
}

/// `n_per_class` documents of every class in the profile.
pub fn synth_corpus(n_per_class: usize, seed: u64, profile: SynthProfile) -> Result<Corpus> {
    let counts: Vec<(Label, usize)> = profile.labels().iter().map(|&l| (l, n_per_class)).collect();
    synth_corpus_counts(&counts, seed)
}

/// Documents with explicit per-label counts. Each label draws from its own
/// random stream, so changing one count leaves the other classes' texts
/// untouched.
pub fn synth_corpus_counts(counts: &[(Label, usize)], seed: u64) -> Result<Corpus> {
    if counts.iter().all(|&(_, n)| n == 0) {
        return Err(Error::invalid("synthetic corpus needs at least one document"));
    }
    let mut docs = Vec::new();
    for &(label, n) in counts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(Label::ALL.iter().position(|&l| l == label).unwrap_or(0) as u64 + 1);
        let medium = label.medium();
        for i in 0..n {
            let text = match label {
                Label::Ham => ham(&mut rng),
                Label::Phishing => phishing(&mut rng),
                Label::SpearPhishing => spear(&mut rng),
                Label::Smishing => sms_until_fits(&mut rng, smishing),
                Label::BenignSms => sms_until_fits(&mut rng, benign_sms),
            };
            let prefix = match medium {
                Medium::Email => "email",
                Medium::Sms => "sms",
            };
            let id = format!("s{seed}-{prefix}-{label}-{i:05}");
            docs.push(Document::new(id, text, label, Source::Synthetic)?);
        }
    }
    Corpus::new(docs)
}

fn sms_until_fits(rng: &mut ChaCha8Rng, f: fn(&mut ChaCha8Rng) -> String) -> String {
    loop {
        let t = f(rng);
        if t.chars().count() <= SMS_MAX_CHARS {
            return t;
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap_or("")
}

fn chance(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.gen_bool(p)
}

fn token(rng: &mut ChaCha8Rng, len: usize) -> String {
    const CH: &[u8] = b"abcdefghijkmnpqrstuvwxyz23456789";
    (0..len).map(|_| CH[rng.gen_range(0..CH.len())] as char).collect()
}

const FIRST: &[&str] = &[
    "Alice", "Ben", "Carla", "David", "Elena", "Frank", "Grace", "Hector", "Irene", "James", "Kavya", "Liam", "Maria",
    "Nikhil", "Olivia", "Pedro", "Quinn", "Rosa", "Samuel", "Tara", "Umar", "Vera", "Wei", "Yusuf", "Zoe",
];
const LAST: &[&str] = &[
    "Adams", "Baker", "Chen", "Diaz", "Evans", "Fischer", "Garcia", "Haddad", "Ito", "Jensen", "Kowalski", "Lopez",
    "Murphy", "Novak", "Okafor", "Patel", "Rossi", "Schmidt", "Tanaka", "Walsh",
];
const COMPANY: &[&str] = &["northwind", "contoso", "fabrikam", "tailspin", "woodgrove", "litware", "adatum", "proseware"];
const PROJECT: &[&str] = &[
    "Atlas", "Beacon", "Cascade", "Delta", "Everest", "Falcon", "Granite", "Horizon", "Juniper", "Keystone", "Meridian",
    "Summit",
];
const DOCUMENT: &[&str] = &[
    "vendor agreement", "statement of work", "budget forecast", "quarterly report", "service contract", "NDA",
    "purchase order", "contract amendment", "project plan", "board deck",
];
const MEETING: &[&str] = &["sync", "planning session", "design review", "one-on-one", "status meeting", "kickoff"];
const WEEKDAY: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];
const TITLE: &[&str] = &[
    "Finance Manager", "Operations Lead", "Project Coordinator", "Account Director", "Procurement Analyst", "HR Partner",
    "VP of Sales",
];
const DEPT: &[&str] = &["finance", "legal", "procurement", "payroll", "accounts payable", "HR"];

fn name(rng: &mut ChaCha8Rng) -> (&'static str, &'static str) {
    (pick(rng, FIRST), pick(rng, LAST))
}

fn ham(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..100) {
        0..=59 => business(rng),
        60..=81 => newsletter(rng),
        _ => personal_note(rng),
    }
}

fn business(rng: &mut ChaCha8Rng) -> String {
    let (first, _) = name(rng);
    let (sender, sender_last) = name(rng);
    let company = pick(rng, COMPANY);
    let project = pick(rng, PROJECT);
    let doc = pick(rng, DOCUMENT);
    let mut s = String::new();
    match rng.gen_range(0..10) {
        0..=6 => {
            let _ = writeln!(s, "{} {first},\n", pick(rng, &["Hi", "Hello", "Hey"]));
        }
        7 | 8 => s.push_str(pick(rng, &["Team,\n\n", "All,\n\n", "Folks,\n\n"])),
        _ => {}
    }
    let mut lines: Vec<String> = vec![
        format!("Attached is the {doc} for the {project} project."),
        format!(
            "Can we move our {} to {} at {}?",
            pick(rng, MEETING),
            pick(rng, WEEKDAY),
            pick(rng, &["10:30", "2pm", "3:15", "11am", "4pm"])
        ),
        format!("The {project} review went well and the notes are on the wiki."),
        format!("Thanks for the comments on the {doc}; I folded them into the latest draft."),
        format!("Let me know if the numbers in section {} look right to you.", rng.gen_range(2..9)),
        format!("I booked room {} for the {}.", rng.gen_range(100..480), pick(rng, MEETING)),
        format!("{} from {} will join us to walk through the {doc}.", pick(rng, FIRST), pick(rng, DEPT)),
        format!("The {project} timeline slipped a week, mostly waiting on the vendor."),
        format!("Could you send me the slides from the {} when you have a moment?", pick(rng, MEETING)),
    ];
    lines.shuffle(rng);
    lines.truncate(rng.gen_range(2..=3));
    if chance(rng, 0.15) {
        lines.push(format!("Following up on our call, the budget for {project} is approved."));
    }
    if chance(rng, 0.10) {
        lines.push(format!("Please sign the {doc} when you get a chance; the original is in the shared folder."));
    }
    if chance(rng, 0.15) {
        lines.push(format!("We need the figures by end of day {}.", pick(rng, WEEKDAY)));
    }
    if chance(rng, 0.2) {
        lines.push(format!(
            "The draft lives at https://intranet.{company}.com/projects/{}/notes.",
            project.to_lowercase()
        ));
    }
    if chance(rng, 0.08) {
        lines.push("Great work on the launch, by the way.".to_string());
    }
    s.push_str(&lines.join(" "));
    let _ = write!(
        s,
        "\n\n{}\n{sender} {sender_last}",
        pick(rng, &["Thanks,", "Best,", "Cheers,", "Regards,"])
    );
    s
}

fn newsletter(rng: &mut ChaCha8Rng) -> String {
    let brand = pick(rng, &["Lumen Outfitters", "Harbor Books", "Pinecrest Home", "Volt Electronics", "Sprout Kitchen"]);
    let slug: String = brand.to_lowercase().split_whitespace().collect();
    let category = pick(rng, &["outdoor gear", "fiction", "bedding", "headphones", "cookware", "garden tools"]);
    let mut parts = vec![
        format!("{brand} {}", pick(rng, &["weekly newsletter", "weekly digest", "monthly roundup"])),
        format!("This week's picks: new arrivals in {category} and a staff favorite."),
    ];
    if chance(rng, 0.7) {
        parts.push(format!(
            "Save {}% off {category} with code {}.",
            pick(rng, &["10", "15", "20", "25"]),
            token(rng, 6).to_uppercase()
        ));
    }
    if chance(rng, 0.5) {
        parts.push("Free shipping on orders over $50.".to_string());
    }
    if chance(rng, 0.2) {
        parts.push("Limited-time offer, ends Sunday.".to_string());
    }
    parts.push(format!("Shop now at https://www.{slug}.com/{}.", category.replace(' ', "-")));
    parts.push(format!(
        "You are receiving this because you subscribed at {slug}.com. Unsubscribe or manage preferences at https://www.{slug}.com/preferences."
    ));
    parts.join("\n\n")
}

fn personal_note(rng: &mut ChaCha8Rng) -> String {
    let (first, _) = name(rng);
    let (sender, _) = name(rng);
    let line = pick(
        rng,
        &[
            "Are we still on for dinner on {day}? I can pick up the wine.",
            "Photos from the weekend are in the shared album, the hike ones came out great.",
            "Mom says thanks for the flowers. She wants everyone over on {day}.",
            "Did you ever finish that book? I'd like to borrow it after.",
            "The kids' recital moved to {day} evening, hope you can still make it.",
        ],
    )
    .replace("{day}", pick(rng, WEEKDAY));
    format!("{} {first}!\n\n{line}\n\n{sender}", pick(rng, &["Hey", "Hi"]))
}

fn suspicious_url(rng: &mut ChaCha8Rng, brand: &str) -> String {
    let slug: String = brand.to_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    match rng.gen_range(0..6) {
        0 => format!("http://bit.ly/{}", token(rng, 7)),
        1 => format!("http://tinyurl.com/{}", token(rng, 8)),
        2 => format!("http://{slug}-secure.{}/login", pick(rng, &["info", "xyz", "top", "live"])),
        3 => format!("https://secure-{slug}.{}/verify", pick(rng, &["info", "net", "biz"])),
        4 => format!("http://{}.{}.{}.{}/{slug}/signin", rng.gen_range(23..220), rng.gen_range(0..255), rng.gen_range(0..255), rng.gen_range(1..254)),
        _ => format!("https://{slug}-account.{}/update", pick(rng, &["com", "info", "click"])),
    }
}

fn phishing(rng: &mut ChaCha8Rng) -> String {
    let bank = pick(rng, &["PayPal", "Chase", "Wells Fargo", "Netflix", "Amazon", "Apple ID", "Microsoft 365", "Bank of America"]);
    let url = suspicious_url(rng, bank);
    let greeting = if chance(rng, 0.85) {
        format!(
            "{} {},\n\n",
            pick(rng, &["Dear", "Hello"]),
            pick(rng, &["Customer", "Valued Customer", "User", "Account Holder", "Member", "Client"])
        )
    } else {
        String::new()
    };
    let hours = pick(rng, &["24", "48", "12", "72"]);
    let mut p: Vec<String> = Vec::new();
    match rng.gen_range(0..100) {
        0..=34 => {
            p.push(format!("We have detected unusual activity on your {bank} account."));
            if chance(rng, 0.8) {
                p.push("Your account has been temporarily suspended for your protection.".into());
            }
            if chance(rng, 0.9) {
                p.push(format!("To restore access, verify your account information within {hours} hours using the link below:"));
            } else {
                p.push("Click here to restore access:".into());
            }
            p.push(url);
            if chance(rng, 0.8) {
                p.push("Failure to verify will result in permanent closure of your account.".into());
            }
        }
        35..=54 => {
            p.push(format!("Your {bank} payment could not be processed and your subscription is on hold."));
            p.push(format!("Please update your billing details immediately at {url} to avoid interruption."));
            if chance(rng, 0.7) {
                p.push("If you do not update your payment, your account will be deactivated.".into());
            }
        }
        55..=74 => {
            p.push(format!(
                "Congratulations! You have been selected to receive a ${} {bank} gift card.",
                pick(rng, &["500", "1000", "250", "750"])
            ));
            p.push(format!("Claim your prize now at {url}"));
            if chance(rng, 0.8) {
                p.push(format!("This offer expires within {hours} hours. Confirm your details to receive your reward."));
            }
        }
        75..=89 => {
            p.push("Your package could not be delivered due to an incomplete address.".into());
            p.push(format!("Update your details at {url} within {hours} hours."));
            if chance(rng, 0.7) {
                p.push("Otherwise the parcel will be returned and a fee will be charged.".into());
            }
        }
        _ => {
            p.push("Your email password expires today.".into());
            p.push(format!("Click here to keep your current password: {url}"));
            if chance(rng, 0.8) {
                p.push("If you do not confirm now, your mailbox will be deactivated and all messages will be deleted.".into());
            }
        }
    }
    if chance(rng, 0.5) {
        p.push(format!("Thank you,\n{bank} Security Team"));
    }
    format!("{greeting}{}", p.join(" "))
}

fn spear(rng: &mut ChaCha8Rng) -> String {
    let (first, _) = name(rng);
    let (sender, sender_last) = name(rng);
    let (boss, _) = name(rng);
    let company = pick(rng, COMPANY);
    let project = pick(rng, PROJECT);
    let doc = pick(rng, DOCUMENT);
    let mut s = format!("{} {first},\n\n", pick(rng, &["Hi", "Hello", "Hi", "Hey"]));
    let mut p: Vec<String> = Vec::new();
    match rng.gen_range(0..4) {
        0 => p.push(format!(
            "Following up on our conversation last {} about the {project} {doc}.",
            pick(rng, WEEKDAY)
        )),
        1 => p.push(format!(
            "As discussed with {} from {}, we are finalizing the {doc} for {project}.",
            pick(rng, FIRST),
            pick(rng, DEPT)
        )),
        2 => p.push(format!(
            "Great job on the {project} presentation last week. I knew I could count on you for this one."
        )),
        _ => p.push(format!("Your team did excellent work on {project}, and {boss} wants to close it out.")),
    }
    let deadline = pick(rng, &["before 3pm today", "by end of day", "before noon today", "today", "before 4:30 pm"]);
    p.push(match rng.gen_range(0..3) {
        0 => format!("{boss}, our {}, asked me to get the revised {doc} signed {deadline}.", pick(rng, TITLE)),
        1 => format!("Could you review and sign the updated {doc} through the secure portal {deadline}?"),
        _ => format!("We still need your signature on the {doc}, and it has to be in {deadline}."),
    });
    if chance(rng, 0.92) {
        let host = match rng.gen_range(0..4) {
            0 => format!("https://{company}-docs.com/review?id={}", rng.gen_range(1000..9999)),
            1 => format!("https://{company}-portal.net/sign/{}", token(rng, 6)),
            2 => format!("https://{company}-secure.com/documents/{}", rng.gen_range(100..999)),
            _ => format!("https://login.{company}-share.com/auth?doc={}", token(rng, 5)),
        };
        p.push(format!(
            "{} {host}",
            pick(rng, &["The document is available here:", "You can access it via the link:", "Please sign in using the portal:"])
        ));
    }
    if chance(rng, 0.7) {
        p.push(
            pick(
                rng,
                &[
                    "If we miss the deadline, payroll for your team will be delayed.",
                    "Otherwise the closing gets pushed and {boss} will have to escalate it.",
                    "Failure to sign today means the vendor payment will be delayed.",
                    "If you don't get to it, {boss} will be held responsible for the delay.",
                ],
            )
            .replace("{boss}", boss),
        );
    }
    if chance(rng, 0.3) {
        p.push("You may need to confirm your login details when the page opens.".into());
    }
    s.push_str(&p.join(" "));
    let _ = write!(
        s,
        "\n\n{}\n{sender} {sender_last}\n{}, {}",
        pick(rng, &["Thanks,", "Best,", "Thanks so much,"]),
        pick(rng, TITLE),
        company[..1].to_uppercase() + &company[1..]
    );
    s
}

fn smishing(rng: &mut ChaCha8Rng) -> String {
    let brand = pick(rng, &["Chase", "PayPal", "Amazon", "Netflix", "BofA", "Venmo"]);
    let courier = pick(rng, &["USPS", "FedEx", "DHL", "UPS"]);
    let short = format!("{}/{}", pick(rng, &["http://bit.ly", "http://rb.gy", "http://tinyurl.com", "http://cutt.ly"]), token(rng, 6));
    match rng.gen_range(0..5) {
        0 => format!(
            "{brand}: unusual sign-in detected. Your account is {}. Verify now: {short}",
            pick(rng, &["locked", "suspended", "frozen"])
        ),
        1 => format!(
            "Congrats! You've won a ${} gift card. Claim within 24 hrs: {short}",
            pick(rng, &["500", "100", "1000"])
        ),
        2 => format!(
            "{courier}: parcel on hold, pay ${}.{:02} redelivery fee at https://{}-redelivery.info/{} today",
            rng.gen_range(1..4),
            rng.gen_range(0..100),
            courier.to_lowercase(),
            token(rng, 5)
        ),
        3 => format!(
            "Final notice: unpaid toll of ${}.{:02}. Pay now to avoid penalties: http://{}.xyz/pay",
            rng.gen_range(3..15),
            rng.gen_range(0..100),
            token(rng, 7)
        ),
        _ => format!(
            "{brand} alert: your payment failed and your account will be closed. Update your billing info immediately at {short}"
        ),
    }
}

fn benign_sms(rng: &mut ChaCha8Rng) -> String {
    let who = pick(rng, FIRST);
    let day = pick(rng, WEEKDAY);
    let t = pick(
        rng,
        &[
            "hey r u still coming over later?",
            "running 10 min late, save me a seat",
            "can u grab milk on the way home",
            "happy bday {who}!! call u later x",
            "ok see u at 7",
            "Your order has shipped and should arrive {day}.",
            "Dentist appt confirmed for {day} at 9:40. Reply C to cancel.",
            "lol that's hilarious, send me the video",
            "{who} is picking up the kids, no worries",
            "did u see the game last night??",
            "Thanks for dinner, had a great time",
            "Meeting moved to {day}, same room",
            "just landed, will text when I'm home",
            "can you call me when u get a sec",
        ],
    );
    t.replace("{who}", who).replace("{day}", day)
}
