#pragma once

// Generated by scripts/gen_patterns.py; mirrors data/disclosure_patterns.txt.

#include <string_view>

namespace dlab {

inline constexpr std::string_view kDefaultPatternFile = R"DLABPAT(# dlab-disclosure-patterns 1
# checksum ea95db7d7d688dd9
; Self-disclosure patterns, one regular expression per low-level category.
; Matching is case-insensitive. Python-style (?P<name>...) groups are accepted.
[Identity]
\b(I am|I'm|Im)\s*(a|an)?\s*(.+?)(?=[,.!?]|$)
[Gender]
; Optional modifiers (percentages, cis/straight/queer qualifiers) may sit
; between the article and the gender word: 'I'm an 100% cis woman'.
\b(?:I am|I'm|Im|I'?m)\s*(?:a|an)?\s*(?:(?:\d{1,3}%|cis|cisgender|straight|gay|queer|proud)\s*)*(?P<sentence_gender>(?:non[-\s]?binary|male|female|man|woman|boy|girl|guy|dude|mother|father|sister|brother|son|daughter|husband|wife|trans(?: man| woman|gender|masculine|feminine)?|genderfluid|agender|demiboy|demigirl|bigender|pangender))\b|(?<!\w)(?P<age>\d{2})(?P<short_gender>(M|F|NB|AMAB|AFAB|MtF|FtM|Enby|GM|GNC|TG|T|Cis))(?!\w)|(?<!\w)(?P<short_gender2>(M|F|NB|AMAB|AFAB|MtF|FtM|Enby|GM|GNC|TG|T|Cis))(?P<age2>\d{2})(?!\w)
[Age]
; The first branch rejects a third digit with (?!\d). Shorthand such as
; '24F' is resolved by precedence: Age spans overlapping a Gender span in
; the same sentence are dropped.
\b(?:I am|I'm|Im|I'?m|aged|age)\s*(?P<age1>\d{2})(?!\d)|(?<!\w)(?P<age4>\d{2})(?P<gender>(M|F|NB|AMAB|AFAB|MtF|FtM|Enby|GM|GNC|TG|T|Cis))(?!\w)|(?<!\w)(?P<gender2>(M|F|NB|AMAB|AFAB|MtF|FtM|Enby|GM|GNC|TG|T|Cis))(?P<age5>\d{2})(?!\w)
[Hobby]
\b(?:I like|I enjoy|I love|I hate|I often|I usually|I prefer|I dislike|I can't stand|I adore|I'm passionate about|I'm fond of|I'm interested in|I'm into|I tend to|I have a habit of)\s+(?P<preference>.+?)(?=[,.!?]|$)
[Possession]
\b(?:I have|I've got|I own|I possess|I hold|I acquired|I received)\s+(?P<experience>.+?)(?=[,.!?]|$)
[Work]
\b(?:I work|I'm working|I'm employed|I have a job|I do work|I freelance|I have been working|I started working|I used to work|I studied|I am studying|I'm studying|Im studying|I have studied)\s+(?P<job_details>.+?)(?=[,.!?]|$)
[Attitude]
\b(?:I believe|I think|I feel|I support|I oppose|I stand for|I stand against|I'm against|I'm for|I'm pro-|I'm anti-|I value|I don't believe in|I consider|I advocate for|I reject|I agree with|I disagree with|I am passionate about|I'm critical of|I align with|I side with|I view|I respect|I distrust|I question|I doubt|I condemn|I appreciate|I prioritize|I favor|I disapprove of|I endorse|I subscribe to|I'm skeptical of)\s+(?P<opinion>.+?)(?=[,.!?]|$)
[Relationship]
; Whitespace allowed between the subject and the optional article so that
; 'I have a friend' matches.
\b(?:I am|I'm|Im|My|Our|We are|I have)\s*(a|an)?\s*(?P<relationship>mother|father|mom|dad|brother|sister|son|daughter|uncle|aunt|grandfather|grandmother|grandpa|grandma|cousin|nephew|niece|husband|wife|boyfriend|girlfriend|partner|spouse|best friend|friend|roommate|fiancé|fiancée|in-law|step(?:mother|father|brother|sister|son|daughter))\b
)DLABPAT";

}  // namespace dlab
