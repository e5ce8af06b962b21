use serde::{Deserialize, Serialize};

pub const QA_SYSTEM: &str = "Based on the triples retrieved from a knowledge graph, please answer the question. \
Please return formatted answers as a list, each prefixed with \"ans:\".";

pub const LABELING_SYSTEM: &str = "Based on the triplets retrieved from a knowledge graph, please select relevant \
triplets for answering the question. Please return formatted triplets as a list, each prefixed with \"evidence:\".";

const ICL_TRIPLES: [(&str, &str, &str); 14] = [
    ("Lou Seal", "sports.mascot.team", "San Francisco Giants"),
    ("San Francisco Giants", "sports.sports_team.championships", "2012 World Series"),
    ("San Francisco Giants", "sports.sports_championship_event.champion", "2014 World Series"),
    ("San Francisco Giants", "time.participant.event", "2014 Major League Baseball season"),
    ("San Francisco Giants", "time.participant.event", "2010 World Series"),
    ("San Francisco Giants", "time.participant.event", "2010 Major League Baseball season"),
    ("San Francisco Giants", "sports.sports_team.championships", "2014 World Series"),
    ("San Francisco Giants", "sports.sports_team.team_mascot", "Crazy Crab"),
    ("San Francisco Giants", "sports.sports_team.championships", "2010 World Series"),
    ("San Francisco Giants", "sports.professional_sports_team.owner_s", "Bill Neukom"),
    ("San Francisco Giants", "time.participant.event", "2012 World Series"),
    ("San Francisco", "sports.sports_team_location.teams", "San Francisco Giants"),
    ("San Francisco Giants", "sports.sports_team.arena_stadium", "AT&T Park"),
    ("AT&T Park", "location.location.events", "2012 World Series"),
];

const ICL_QUESTION: &str = "What year did the team with mascot named Lou Seal win the World Series?";

const ICL_ANSWER: &str = "To find the year the team with mascot named Lou Seal won the World Series, we need to find \
the team with mascot named Lou Seal and then find the year they won the World Series.

From the triplets, we can see that Lou Seal is the mascot of the San Francisco Giants.

Now, we need to find the year the San Francisco Giants won the World Series.

From the triplets, we can see that San Francisco Giants won the 2010 World Series and 2012 World Series and 2014 World Series.

So, the team with mascot named Lou Seal (San Francisco Giants) won the World Series in 2010, 2012, and 2014.

Therefore, the formatted answers are:

ans: 2014 (2014 World Series)
ans: 2012 (2012 World Series)
ans: 2010 (2010 World Series)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
}

impl PromptBundle {
    /// Human-readable dump, one `role:` header per message.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            out.push_str(&format!("=== {role} ===\n{}\n", m.content));
        }
        out
    }
}

/// `(head,relation,tail)`, no spaces after the commas.
pub fn render_triple(head: &str, relation: &str, tail: &str) -> String {
    format!("({head},{relation},{tail})")
}

/// User message body: triples under `Triplets:`, then the question.
pub fn user_content<S: AsRef<str>>(triples: &[(S, S, S)], question: &str) -> String {
    let mut s = String::from("Triplets:\n");
    for (h, r, t) in triples {
        s.push_str(&render_triple(h.as_ref(), r.as_ref(), t.as_ref()));
        s.push('\n');
    }
    s.push_str("\nQuestion:\n");
    s.push_str(question);
    s
}

/// The bundled World-Series demonstration as `(user, assistant)` contents.
pub fn icl_example() -> (String, String) {
    (user_content(&ICL_TRIPLES, ICL_QUESTION), ICL_ANSWER.to_owned())
}

/// QA prompt over ranked triples. With no triples the `Triplets:` header is
/// kept with no lines (used when answering without retrieval).
pub fn build_qa_prompt<S: AsRef<str>>(question: &str, ranked_triples: &[(S, S, S)], with_icl: bool) -> PromptBundle {
    let mut messages = vec![Message::new(Role::System, QA_SYSTEM)];
    if with_icl {
        let (u, a) = icl_example();
        messages.push(Message::new(Role::User, u));
        messages.push(Message::new(Role::Assistant, a));
    }
    messages.push(Message::new(Role::User, user_content(ranked_triples, question)));
    PromptBundle { messages }
}

pub fn build_labeling_prompt<S: AsRef<str>>(question: &str, candidate_triples: &[(S, S, S)]) -> PromptBundle {
    PromptBundle {
        messages: vec![
            Message::new(Role::System, LABELING_SYSTEM),
            Message::new(Role::User, user_content(candidate_triples, question)),
        ],
    }
}
