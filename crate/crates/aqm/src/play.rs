//! Interactive game with a human in the answerer's seat.

use std::io::{self, BufRead, Write};

use aqm_core::engine::{guess, posterior_update, select_question, EngineError};
use aqm_core::mnist::{DigitImage, Property, DIGITS_PER_IMAGE};
use aqm_core::{Posterior, Prior};

use crate::harness::Setup;

#[derive(Debug, Clone, PartialEq)]
pub struct PlaySummary {
    pub target: usize,
    pub answers: Vec<(usize, usize)>,
    pub guess: usize,
    /// False when input ended before the last turn.
    pub completed: bool,
}

impl PlaySummary {
    pub fn success(&self) -> bool {
        self.guess == self.target
    }
}

pub fn render_image(image: &DigitImage) -> String {
    let mut s = format!("{:>3}  {:<8}{:<9}{:<8}{}\n", "#", "color", "bgcolor", "number", "style");
    for (i, d) in image.digits.iter().enumerate() {
        let name = |p: Property| p.value_name(d.get(p)).unwrap_or("?");
        s.push_str(&format!(
            "{:>3}  {:<8}{:<9}{:<8}{}\n",
            i + 1,
            name(Property::Color),
            name(Property::Bgcolor),
            name(Property::Number),
            name(Property::Style)
        ));
    }
    s
}

fn top(post: &Posterior, k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = post.probs().into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.retain(|&(_, p)| p > 0.0);
    ranked.truncate(k);
    ranked
}

enum Input {
    Answer(usize),
    Eof,
}

fn read_answer<R: BufRead, W: Write>(input: &mut R, out: &mut W, prompt: &str) -> io::Result<Input> {
    loop {
        write!(out, "{prompt}")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(Input::Eof);
        }
        match line.trim().parse::<usize>() {
            Ok(a) if a <= DIGITS_PER_IMAGE => return Ok(Input::Answer(a)),
            _ => writeln!(out, "please enter a whole number from 0 to {DIGITS_PER_IMAGE}")?,
        }
    }
}

/// Runs one game: shows the target, asks `turns` questions, reads answers
/// from `input` and reports the posterior after each one.
pub fn play<R: BufRead, W: Write>(
    setup: &Setup,
    target: usize,
    turns: usize,
    mut input: R,
    mut out: W,
) -> io::Result<PlaySummary> {
    let image = &setup.candidates[target];
    let n = setup.candidates.len();
    writeln!(out, "You are the answerer. The secret image is #{} of {n} candidates:", image.id)?;
    write!(out, "{}", render_image(image))?;
    writeln!(out, "Answer each question with a count from 0 to {DIGITS_PER_IMAGE}.")?;

    let prior = Prior::uniform(n).map_err(io::Error::other)?;
    let mut post = Posterior::from_prior(&prior);
    let pool = setup.pool.questions();
    let mut answers = Vec::new();
    let mut completed = true;
    'turns: for turn in 1..=turns {
        let choice = select_question(&post, pool, &setup.likelihood, None).map_err(io::Error::other)?;
        let q = &pool[choice.position];
        loop {
            let prompt = format!("\nQ{turn}: {} ", q.payload);
            let a = match read_answer(&mut input, &mut out, &prompt)? {
                Input::Answer(a) => a,
                Input::Eof => {
                    completed = false;
                    break 'turns;
                }
            };
            match posterior_update(&post, q, a, &setup.likelihood) {
                Ok(next) => {
                    post = next;
                    answers.push((q.id, a));
                    break;
                }
                Err(EngineError::ImpossibleAnswer { .. }) => {
                    writeln!(out, "no candidate is consistent with {a}; try again")?;
                }
                Err(e) => return Err(io::Error::other(e)),
            }
        }
        writeln!(out, "top candidates (entropy {:.3} nats):", post.entropy())?;
        for (rank, (c, p)) in top(&post, 5).into_iter().enumerate() {
            writeln!(out, "  {}. image #{:<6} p = {:.4}", rank + 1, setup.candidates[c].id, p)?;
        }
    }

    let g = guess(&post);
    let summary = PlaySummary { target, answers, guess: g, completed };
    writeln!(out)?;
    if !completed {
        writeln!(out, "input ended after {} of {turns} answers", summary.answers.len())?;
    }
    writeln!(
        out,
        "My guess: image #{} ({}; the secret image was #{})",
        setup.candidates[g].id,
        if summary.success() { "correct" } else { "wrong" },
        image.id
    )?;
    Ok(summary)
}
