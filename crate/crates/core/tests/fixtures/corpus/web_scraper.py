import requests
from bs4 import BeautifulSoup

BASE = "https://example.org"


def fetch(path):
    response = requests.get(BASE + path, timeout=10)
    response.raise_for_status()
    return BeautifulSoup(response.text, "html.parser")


def titles(page):
    return [a.get_text(strip=True) for a in page.find_all("h2")]


def legacy_fetch(path):
    import urllib.request
    return urllib.request.urlopen(BASE + path).read()


for t in titles(fetch("/news")):
    print(t)
