"""The three-user, four-movie illustration table with its attributes."""

from .ingest import AttributeTable, RatingDataset

MOVIES = ("God Father", "Good Fellas", "Vertigo", "N by NW")
USERS = ("u1", "u2", "u3")

ITEM_ATTRIBUTES = ("Director", "Actor", "Genre")
ITEM_ROWS = (
    ("Scorsese", "De Niro", "Crime"),
    ("Coppola", "De Niro", "Crime"),
    ("Hitchcock", "Stewart", "Thriller"),
    ("Hitchcock", "Grant", "Thriller"),
)

USER_ATTRIBUTES = ("Age", "ZipCode", "Country", "Sex")
USER_ROWS = (
    ("20", "10081", "China", "M"),
    ("40", "2007", "Australia", "F"),
    ("20", "2008", "Australia", "M"),
)

RATINGS = (
    (1, 3, 5, 4),
    (4, 2, 1, 5),
    (None, 2, None, 4),
)


def toy_items() -> AttributeTable:
    return AttributeTable.from_rows(ITEM_ATTRIBUTES, ITEM_ROWS, MOVIES)


def toy_users() -> AttributeTable:
    return AttributeTable.from_rows(USER_ATTRIBUTES, USER_ROWS, USERS)


def toy_ratings() -> RatingDataset:
    entries = [(u, i, r) for u, row in enumerate(RATINGS) for i, r in enumerate(row) if r is not None]
    return RatingDataset(
        n_users=len(USERS), n_items=len(MOVIES),
        users=[e[0] for e in entries], items=[e[1] for e in entries], ratings=[float(e[2]) for e in entries],
        scale_min=1.0, scale_max=5.0, user_ids=USERS, item_ids=MOVIES, name="toy",
    )
