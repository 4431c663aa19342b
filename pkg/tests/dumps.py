"""Small raw dataset dumps in the MovieLens-1M and Book-Crossing layouts."""

from pathlib import Path

ML_USERS = [
    "1::F::1::10::48067",
    "2::M::56::16::70072",
    "3::M::25::15::55117",
    "4::M::45::7::02460",
]
ML_MOVIES = [
    "1::Toy Story (1995)::Animation|Children's|Comedy",
    "1193::One Flew Over the Cuckoo's Nest (1975)::Drama",
    "2355::Bug's Life, A (1998)::Animation|Children's|Comedy",
    "3408::Erin Brockovich (2000)::Drama",
]
ML_RATINGS = [
    "1::1193::5::978300760",
    "1::2355::5::978824291",
    "2::1193::4::978298413",
    "2::3408::3::978299000",
    "3::1::4::978297867",
    "3::3408::2::978298000",
    "1::1::3::978301968",
]


def write_lines(path, lines, encoding="iso-8859-1"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(("\n".join(lines) + ("\n" if lines else "")).encode(encoding))
    return path


def movielens_dump(directory, users=ML_USERS, movies=ML_MOVIES, ratings=ML_RATINGS):
    directory = Path(directory)
    write_lines(directory / "users.dat", users)
    write_lines(directory / "movies.dat", movies)
    write_lines(directory / "ratings.dat", ratings)
    return directory


BX_USERS = [
    '"User-ID";"Location";"Age"',
    '"276725";"tyler, texas, usa";NULL',
    '"276726";"seattle, washington, usa";"34"',
    '"276727";"rijeka, n/a, croatia";"16"',
    '"276729";"porto, porto, portugal";"999"',
]
BX_BOOKS = [
    '"ISBN";"Book-Title";"Book-Author";"Year-Of-Publication";"Publisher";"Image-URL-S";"Image-URL-M";"Image-URL-L"',
    '"034545104X";"Flesh Tones: A Novel";"M. J. Rose";"2002";"Ballantine Books";"s";"m";"l"',
    '"0155061224";"Rites of Passage";"Judith Rae";"2001";"Heinle";"s";"m";"l"',
    '"0446520802";"The Notebook";"Nicholas Sparks";"1996";"Warner Books";"s";"m";"l"',
    '"052165615X";"Help!: Level 1";"Philip Prowse";"0";"Cambridge University Press";"s";"m";"l"',
]
BX_RATINGS = [
    '"User-ID";"ISBN";"Book-Rating"',
    '"276725";"034545104X";"0"',
    '"276726";"0155061224";"5"',
]


def bookcrossing_dump(directory, users=BX_USERS, books=BX_BOOKS, ratings=BX_RATINGS):
    directory = Path(directory)
    write_lines(directory / "BX-Users.csv", users)
    write_lines(directory / "BX-Books.csv", books)
    write_lines(directory / "BX-Book-Ratings.csv", ratings)
    return directory
