#!/usr/bin/env python3
"""Regenerates data/disclosure_patterns.txt and the embedded copy in
include/dlab/default_patterns.hpp from the section bodies below."""
import pathlib

FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


SHORT = r"M|F|NB|AMAB|AFAB|MtF|FtM|Enby|GM|GNC|TG|T|Cis"

SECTIONS = [
    ("Identity", [],
     r"\b(I am|I'm|Im)\s*(a|an)?\s*(.+?)(?=[,.!?]|$)"),
    ("Gender", [
        "; Optional modifiers (percentages, cis/straight/queer qualifiers) may sit",
        "; between the article and the gender word: 'I'm an 100% cis woman'.",
    ],
     r"\b(?:I am|I'm|Im|I'?m)\s*(?:a|an)?\s*(?:(?:\d{1,3}%|cis|cisgender|straight|gay|queer|proud)\s*)*"
     r"(?P<sentence_gender>(?:non[-\s]?binary|male|female|man|woman|boy|girl|guy|dude|mother|father|"
     r"sister|brother|son|daughter|husband|wife|trans(?: man| woman|gender|masculine|feminine)?|"
     r"genderfluid|agender|demiboy|demigirl|bigender|pangender))\b|"
     r"(?<!\w)(?P<age>\d{2})(?P<short_gender>(" + SHORT + r"))(?!\w)|"
     r"(?<!\w)(?P<short_gender2>(" + SHORT + r"))(?P<age2>\d{2})(?!\w)"),
    ("Age", [
        "; The first branch rejects a third digit with (?!\\d). Shorthand such as",
        "; '24F' is resolved by precedence: Age spans overlapping a Gender span in",
        "; the same sentence are dropped.",
    ],
     r"\b(?:I am|I'm|Im|I'?m|aged|age)\s*(?P<age1>\d{2})(?!\d)|"
     r"(?<!\w)(?P<age4>\d{2})(?P<gender>(" + SHORT + r"))(?!\w)|"
     r"(?<!\w)(?P<gender2>(" + SHORT + r"))(?P<age5>\d{2})(?!\w)"),
    ("Hobby", [],
     r"\b(?:I like|I enjoy|I love|I hate|I often|I usually|I prefer|I dislike|I can't stand|I adore|"
     r"I'm passionate about|I'm fond of|I'm interested in|I'm into|I tend to|I have a habit of)\s+"
     r"(?P<preference>.+?)(?=[,.!?]|$)"),
    ("Possession", [],
     r"\b(?:I have|I've got|I own|I possess|I hold|I acquired|I received)\s+"
     r"(?P<experience>.+?)(?=[,.!?]|$)"),
    ("Work", [
    ],
     r"\b(?:I work|I'm working|I'm employed|I have a job|I do work|I freelance|I have been working|"
     r"I started working|I used to work|I studied|I am studying|I'm studying|Im studying|I have studied)\s+"
     r"(?P<job_details>.+?)(?=[,.!?]|$)"),
    ("Attitude", [],
     r"\b(?:I believe|I think|I feel|I support|I oppose|I stand for|I stand against|I'm against|I'm for|"
     r"I'm pro-|I'm anti-|I value|I don't believe in|I consider|I advocate for|I reject|I agree with|"
     r"I disagree with|I am passionate about|I'm critical of|I align with|I side with|I view|I respect|"
     r"I distrust|I question|I doubt|I condemn|I appreciate|I prioritize|I favor|I disapprove of|"
     r"I endorse|I subscribe to|I'm skeptical of)\s+(?P<opinion>.+?)(?=[,.!?]|$)"),
    ("Relationship", [
        "; Whitespace allowed between the subject and the optional article so that",
        "; 'I have a friend' matches.",
    ],
     r"\b(?:I am|I'm|Im|My|Our|We are|I have)\s*(a|an)?\s*(?P<relationship>mother|father|mom|dad|"
     r"brother|sister|son|daughter|uncle|aunt|grandfather|grandmother|grandpa|grandma|cousin|nephew|"
     r"niece|husband|wife|boyfriend|girlfriend|partner|spouse|best friend|friend|roommate|fiancé|"
     r"fiancée|in-law|step(?:mother|father|brother|sister|son|daughter))\b"),
]


def main() -> None:
    root = pathlib.Path(__file__).resolve().parent.parent
    body_lines = [
        "; Self-disclosure patterns, one regular expression per low-level category.",
        "; Matching is case-insensitive. Python-style (?P<name>...) groups are accepted.",
    ]
    for name, notes, regex in SECTIONS:
        body_lines.append(f"[{name}]")
        body_lines.extend(notes)
        body_lines.append(regex)
    body = ("\n".join(body_lines) + "\n").encode("utf-8")
    header = f"# dlab-disclosure-patterns 1\n# checksum {fnv1a64(body):016x}\n".encode()
    text = header + body
    (root / "data" / "disclosure_patterns.txt").write_bytes(text)

    literal = text.decode("utf-8")
    hpp = (
        "#pragma once\n\n"
        "// Generated by scripts/gen_patterns.py; mirrors data/disclosure_patterns.txt.\n\n"
        "#include <string_view>\n\n"
        "namespace dlab {\n\n"
        "inline constexpr std::string_view kDefaultPatternFile = R\"DLABPAT(" + literal + ")DLABPAT\";\n\n"
        "}  // namespace dlab\n"
    )
    (root / "include" / "dlab" / "default_patterns.hpp").write_text(hpp, encoding="utf-8")


if __name__ == "__main__":
    main()
