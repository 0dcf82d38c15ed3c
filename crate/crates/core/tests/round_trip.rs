use ahakit_core::derive_seed;
use ahakit_core::fixtures::{build_fixtures, rasm_corpus};
use ahakit_core::puzzlegen::{
    gen_countdown, gen_kk, grade_answer, read_puzzles, write_puzzles, CountdownConfig, KkGrammar, Puzzle, Verdict,
};
use ahakit_core::transcript::{parse_transcripts, write_transcripts};

#[test]
fn puzzles_survive_the_dataset_format_and_grade_their_own_solutions() {
    let mut puzzles = Vec::new();
    for n in 3..=6 {
        for i in 0..10 {
            let s = derive_seed(1, n, i);
            puzzles.push(Puzzle::Kk(gen_kk(n, s, &KkGrammar::default()).unwrap()));
            puzzles.push(Puzzle::Countdown(gen_countdown(n, s, &CountdownConfig::default()).unwrap()));
        }
    }
    let mut buf = Vec::new();
    write_puzzles(&mut buf, &puzzles).unwrap();
    let back = read_puzzles(buf.as_slice()).unwrap();
    assert_eq!(back.len(), puzzles.len());
    for (x, y) in back.iter().zip(&puzzles) {
        match (x, y) {
            (Puzzle::Kk(a), Puzzle::Kk(b)) => assert_eq!(a, b),
            // Printing drops redundant parentheses, so only value and leaves survive.
            (Puzzle::Countdown(a), Puzzle::Countdown(b)) => {
                assert_eq!((&a.numbers, a.target, a.seed), (&b.numbers, b.target, b.seed));
                assert_eq!(a.witness.eval(), b.witness.eval());
                assert!(a.witness_is_valid());
            }
            _ => panic!("task changed"),
        }
    }
    for p in &back {
        let answer = match p {
            Puzzle::Kk(k) => k.solution_text(),
            Puzzle::Countdown(c) => c.witness.to_string(),
        };
        assert_eq!(grade_answer(p, &answer), Verdict::Correct, "{}", p.id());
    }
}

#[test]
fn transcripts_survive_jsonl() {
    let corpus = rasm_corpus(3);
    let mut buf = Vec::new();
    write_transcripts(&mut buf, &corpus).unwrap();
    let outcome = parse_transcripts(buf.as_slice());
    assert!(outcome.errors.is_empty());
    assert_eq!(outcome.transcripts, corpus);
}

#[test]
fn fixture_tree_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files_a = build_fixtures(7, a.path()).unwrap();
    let files_b = build_fixtures(7, b.path()).unwrap();
    assert_eq!(files_a.len(), files_b.len());
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(fa.strip_prefix(a.path()).unwrap(), fb.strip_prefix(b.path()).unwrap());
        assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{}", fa.display());
    }
}
