"""Build a tiny per-user history library and poke at retrieval.

Run: python3 demos/retrieval_library.py
"""

from intentkit import (
    EmbedderSpec,
    IntentExplanation,
    IntentHistoryLibrary,
    discriminability_report,
    get_taxonomy,
)

HISTORY = [
    ("sandra", "personal record", "Sandra logs her runs every morning and posts the pace chart for her own tracking."),
    ("sandra", "emotional venting", "She writes long posts about her commute when the trains are delayed, just to let off steam."),
    ("sandra", "personal record", "Weekly reading-streak screenshots; she likes keeping a public tally of finished books."),
    ("marco", "social approval", "Marco posts gym selfies and watches the like counter; he asks friends to rate them."),
    ("marco", "personal record", "Daily language-learning streaks, posted mostly so he can scroll back through them later."),
]


def main() -> None:
    weibo = get_taxonomy("weibo")
    library = IntentHistoryLibrary(weibo, EmbedderSpec(backend="hashed_bow", dim=256))
    for user, label, text in HISTORY:
        library.insert(user, label, IntentExplanation(text, "generic"))
    print(f"library holds {len(library)} entries for "
          f"{len({u for u, _, _ in HISTORY})} users\n")

    # A new post from sandra. The agent would first guess candidate labels,
    # then ask the library which past behavior looks closest.
    query = "posted a screenshot of her marathon training week"
    candidates = ("personal record", "emotional venting", "social approval")
    result = library.retrieve("sandra", options=candidates, query_text=query, k=3)
    print(f"query: {query!r}")
    print(f"candidates: {candidates}")
    for match in result.matches:
        print(f"  sim={match.similarity:+.3f}  [{match.entry.label}] "
              f"{match.entry.explanation.text[:70]}...")

    # Options filter is strict: only sandra's entries with these labels
    # are even considered. marco's gym selfies can never show up here.
    assert all(m.entry.user == "sandra" for m in result.matches)

    print("\nhow separable are the explanation embeddings?")
    report = discriminability_report(library.entries)
    for key, value in report.to_dict().items():
        print(f"  {key:>16}: {value}")


if __name__ == "__main__":
    main()
