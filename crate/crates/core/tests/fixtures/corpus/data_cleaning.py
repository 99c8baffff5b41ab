import pandas as pd


def drop_sparse(frame, limit):
    keep = frame.columns[frame.isnull().mean() < limit]
    return frame[keep]


def normalize(frame):
    return (frame - frame.mean()) / frame.std()


def unused_report(frame):
    print(frame.describe())


raw = pd.read_csv("survey.csv")
clean = normalize(drop_sparse(raw, 0.3))
clean.to_csv("survey_clean.csv", index=False)
