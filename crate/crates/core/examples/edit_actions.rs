//! Tokenizes a claim and walks every legal edit.
//!
//!     cargo run --example edit_actions -- "The senator voted against the bill yesterday"

use claimforge::lexedit::{apply_action, legal_actions, tokenize, Lexicon};

fn main() {
    let text = std::env::args().nth(1).unwrap_or_else(|| "The mayor announced a new tax on cars".into());
    let lex = Lexicon::bundled();
    let claim = tokenize(&text, &lex).expect("non-empty claim");
    for (t, p) in claim.tokens().iter().zip(claim.pos()) {
        print!("{t}/{} ", p.as_str());
    }
    println!();

    let legal = legal_actions(&claim, &lex);
    println!("{} of 128 actions are legal", legal.len());
    for a in legal {
        let next = apply_action(&claim, a, &lex).unwrap();
        println!("  {:>3} {:<18} {}", a.flatten(), a.to_string(), next.text());
    }
}
