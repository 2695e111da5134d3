//! Synthetic ambiguous-vocabulary corpus.
//!
//! Twenty terms that mean one thing in telecom and another in everyday
//! English ("cell", "core", "sector", ...). Each sense has its own pool of
//! cue words. A triplet anchors on one sense; the positive describes the
//! same sense with disjoint cue words and the negative shares the term but
//! uses the other sense, which makes every negative a lexical hard negative.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{RawDocument, SourceKind};
use crate::dataset::Triplet;

pub struct AmbiguousTerm {
    pub term: &'static str,
    pub telecom: [&'static str; 8],
    pub general: [&'static str; 8],
}

pub const AMBIGUOUS_TERMS: [AmbiguousTerm; 20] = [
    AmbiguousTerm {
        term: "cell",
        telecom: ["gNB", "coverage", "reselection", "PCI", "neighbour", "RSRP", "antenna", "eNB"],
        general: ["membrane", "nucleus", "tissue", "organism", "mitosis", "cytoplasm", "biology", "microscope"],
    },
    AmbiguousTerm {
        term: "core",
        telecom: ["AMF", "SMF", "UPF", "5GC", "EPC", "signalling", "subscriber", "registration"],
        general: ["apple", "seeds", "fruit", "peel", "orchard", "juice", "bite", "stem"],
    },
    AmbiguousTerm {
        term: "sector",
        telecom: ["azimuth", "tilt", "panel", "site", "downlink", "interference", "MIMO", "rollout"],
        general: ["economy", "industry", "investors", "market", "banking", "growth", "finance", "stocks"],
    },
    AmbiguousTerm {
        term: "handover",
        telecom: ["X2", "Xn", "target", "measurement", "mobility", "RRC", "latency", "source"],
        general: ["keys", "tenant", "landlord", "ceremony", "property", "deed", "mayor", "contract"],
    },
    AmbiguousTerm {
        term: "bearer",
        telecom: ["QoS", "QCI", "GTP", "dedicated", "default", "PDN", "throughput", "EPS"],
        general: ["flag", "parade", "news", "messenger", "gift", "torch", "banner", "ceremonial"],
    },
    AmbiguousTerm {
        term: "slice",
        telecom: ["NSSAI", "isolation", "URLLC", "eMBB", "orchestration", "multitenant", "SLA", "virtualized"],
        general: ["bread", "cake", "pizza", "knife", "toast", "cheese", "butter", "crust"],
    },
    AmbiguousTerm {
        term: "paging",
        telecom: ["idle", "tracking", "UE", "DRX", "occasion", "wakeup", "TAC", "MME"],
        general: ["book", "chapter", "novel", "reader", "library", "index", "bookmark", "leafing"],
    },
    AmbiguousTerm {
        term: "carrier",
        telecom: ["aggregation", "component", "bandwidth", "spectrum", "subcarrier", "numerology", "uplink", "EARFCN"],
        general: ["shipping", "parcel", "courier", "aircraft", "navy", "luggage", "freight", "pigeon"],
    },
    AmbiguousTerm {
        term: "frame",
        telecom: ["subframe", "slot", "TDD", "symbol", "preamble", "CRC", "Ethernet", "header"],
        general: ["picture", "painting", "wooden", "gallery", "portrait", "glasses", "wall", "canvas"],
    },
    AmbiguousTerm {
        term: "port",
        telecom: ["switch", "VLAN", "SFP", "TCP", "trunking", "interface", "duplex", "ingress"],
        general: ["harbour", "ships", "docks", "sailors", "cargo", "wine", "quay", "ferry"],
    },
    AmbiguousTerm {
        term: "channel",
        telecom: ["PDSCH", "PUCCH", "logical", "transport", "fading", "estimation", "coding", "physical"],
        general: ["television", "broadcast", "river", "swim", "English", "canal", "boat", "viewers"],
    },
    AmbiguousTerm {
        term: "tunnel",
        telecom: ["GTP-U", "encapsulation", "TEID", "IPsec", "VPN", "endpoint", "GRE", "overlay"],
        general: ["mountain", "train", "excavation", "highway", "darkness", "rock", "miners", "drilling"],
    },
    AmbiguousTerm {
        term: "node",
        telecom: ["router", "NFV", "orchestrator", "topology", "edge", "controller", "SDN", "fronthaul"],
        general: ["lymph", "swelling", "immune", "infection", "doctor", "glands", "neck", "patient"],
    },
    AmbiguousTerm {
        term: "link",
        telecom: ["budget", "backhaul", "microwave", "margin", "adaptation", "BLER", "failure", "radio"],
        general: ["chain", "sausage", "bracelet", "cufflink", "metal", "jewelry", "necklace", "golden"],
    },
    AmbiguousTerm {
        term: "band",
        telecom: ["mmWave", "FR1", "FR2", "licensed", "n78", "frequency", "guard", "TDD-band"],
        general: ["guitar", "drummer", "concert", "album", "singer", "rock-music", "tour", "stage"],
    },
    AmbiguousTerm {
        term: "beam",
        telecom: ["beamforming", "SSB", "sweeping", "massive", "precoding", "steering", "CSI-RS", "codebook"],
        general: ["steel", "timber", "ceiling", "construction", "girder", "carpenter", "roof", "welding"],
    },
    AmbiguousTerm {
        term: "trunk",
        telecom: ["SIP", "PBX", "circuits", "VoIP", "E1", "switching", "exchange", "trunkgroup"],
        general: ["tree", "bark", "oak", "roots", "branches", "forest", "elephant", "luggage-box"],
    },
    AmbiguousTerm {
        term: "mesh",
        telecom: ["Wi-Fi", "routing", "hops", "self-healing", "802.11s", "gateway", "repeaters", "multipath"],
        general: ["fabric", "stockings", "net", "wire", "fence", "fishing", "screen", "netting"],
    },
    AmbiguousTerm {
        term: "bridge",
        telecom: ["MAC", "spanning", "STP", "learning", "forwarding", "broadcast-domain", "layer2", "BPDU"],
        general: ["riverbank", "suspension", "arch", "pedestrians", "span", "cables", "crossing", "toll"],
    },
    AmbiguousTerm {
        term: "backbone",
        telecom: ["MPLS", "optical", "DWDM", "peering", "transit", "IP", "capacity", "LSP"],
        general: ["spine", "vertebrae", "posture", "skeleton", "courage", "injury", "chiropractor", "fish"],
    },
];

/// Telecom acronyms in the cue pools; used as tokenizer extension terms.
pub fn domain_terms() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = AMBIGUOUS_TERMS
        .iter()
        .flat_map(|t| t.telecom.iter().copied())
        .filter(|w| w.chars().filter(|c| c.is_ascii_uppercase()).count() >= 2)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn sense_pool(t: &AmbiguousTerm, telecom: bool) -> &[&'static str; 8] {
    if telecom {
        &t.telecom
    } else {
        &t.general
    }
}

fn sense_name(telecom: bool) -> &'static str {
    if telecom {
        "telecom"
    } else {
        "general"
    }
}

pub fn generate_triplet(rng: &mut ChaCha8Rng, id: String) -> Triplet {
    let t = AMBIGUOUS_TERMS.choose(rng).expect("terms");
    let telecom = rng.random_bool(0.5);
    let mut same: Vec<&str> = sense_pool(t, telecom).to_vec();
    same.shuffle(rng);
    let mut other: Vec<&str> = sense_pool(t, !telecom).to_vec();
    other.shuffle(rng);
    let anchor = format!("what is the {} {} {} {}?", t.term, same[0], same[1], same[2]);
    let positive = format!("the {} {} {} {}", t.term, same[3], same[4], same[5]);
    let negative = format!("the {} {} {} {}", t.term, other[0], other[1], other[2]);
    Triplet { id, anchor, positive, negative, topic: Some(format!("{}/{}", t.term, sense_name(telecom))) }
}

/// `(train, held_out)` triplet sets.
pub fn generate_triplets(seed: u64, n_train: usize, n_test: usize) -> (Vec<Triplet>, Vec<Triplet>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = (0..n_train).map(|i| generate_triplet(&mut rng, format!("train-{i:05}"))).collect();
    let test = (0..n_test).map(|i| generate_triplet(&mut rng, format!("test-{i:05}"))).collect();
    (train, test)
}

const FILLERS: [&str; 8] = [
    "In practice the {t} relates to {a} and {b}.",
    "Operators describe the {t} in terms of {a}, {b} and {c}.",
    "A {t} is usually discussed together with {a}.",
    "Documentation of the {t} covers {a} as well as {b}.",
    "When {a} changes, the {t} is affected through {b}.",
    "The {t} depends on {a}, while {b} and {c} matter less.",
    "Reviewers checked how the {t} handles {a} and {c}.",
    "Typical questions about the {t} mention {b} and {a}.",
];

fn sentence(rng: &mut ChaCha8Rng, term: &str, pool: &[&str; 8]) -> String {
    let tpl = FILLERS.choose(rng).expect("fillers");
    let words: Vec<&&str> = pool.choose_multiple(rng, 3).collect();
    tpl.replace("{t}", term).replace("{a}", words[0]).replace("{b}", words[1]).replace("{c}", words[2])
}

/// One RFC-style document per term with a numbered section per sense.
pub fn generate_documents(seed: u64) -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AMBIGUOUS_TERMS
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut text = String::from("Status of This Memo\n\nThis memo provides synthetic reference material for evaluation. Distribution of this memo is unlimited.\n\n");
            for (s, telecom) in [true, false].into_iter().enumerate() {
                text.push_str(&format!("{}. {} ({} usage)\n\n", s + 1, t.term.to_uppercase(), sense_name(telecom)));
                for _ in 0..2 {
                    let para: Vec<String> =
                        (0..4).map(|_| sentence(&mut rng, t.term, sense_pool(t, telecom))).collect();
                    text.push_str("   ");
                    text.push_str(&para.join(" "));
                    text.push_str("\n\n");
                }
                text.push_str("   +------+------+\n   |  --  |  --  |\n   +------+------+\n\n");
            }
            let mut metadata = BTreeMap::new();
            metadata.insert("rfc_id".to_string(), format!("{}", 90000 + i));
            metadata.insert("term".to_string(), t.term.to_string());
            RawDocument { doc_id: format!("synth-{:02}-{}", i, t.term), source_kind: SourceKind::Rfc, text, metadata }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn pools_are_disjoint() {
        let mut all = HashSet::new();
        for t in &AMBIGUOUS_TERMS {
            for w in t.telecom.iter().chain(&t.general) {
                assert!(all.insert(*w), "duplicate cue word {w}");
                assert_ne!(*w, t.term);
            }
        }
    }

    #[test]
    fn triplets_are_valid_and_seeded() {
        let (train, test) = generate_triplets(3, 50, 20);
        assert_eq!((train.len(), test.len()), (50, 20));
        for t in train.iter().chain(&test) {
            t.validate().unwrap();
        }
        assert_eq!(generate_triplets(3, 50, 20).0, train);
        assert_ne!(generate_triplets(4, 50, 20).0, train);
    }

    #[test]
    fn anchor_and_positive_share_no_cue_words() {
        let (train, _) = generate_triplets(9, 200, 0);
        for t in &train {
            let a: HashSet<&str> = t.anchor.trim_end_matches('?').split(' ').skip(4).collect();
            let p: HashSet<&str> = t.positive.split(' ').skip(2).collect();
            assert!(a.is_disjoint(&p), "{t:?}");
        }
    }

    #[test]
    fn documents_have_two_sections() {
        let docs = generate_documents(1);
        assert_eq!(docs.len(), 20);
        assert!(docs[0].text.contains("1. CELL (telecom usage)"));
        assert!(docs[0].text.contains("2. CELL (general usage)"));
        assert!(domain_terms().contains(&"AMF"));
    }
}
