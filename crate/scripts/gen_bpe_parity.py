#!/usr/bin/env python3
"""Generate the multilingual BPE parity fixture with tiktoken as the reference
encoder. Output: JSONL of {"text": ..., "ids": [...]}, 500 lines."""
import base64
import json
import random
import sys

import tiktoken

PATTERN = r"(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+"

BASE = {
    "en": [
        "The quick brown fox jumps over the lazy dog.",
        "It's a truth universally acknowledged that we'll need more data.",
        "She said: \"I don't know, maybe tomorrow?\"",
        "Prices rose 3.75% in 2023, reaching $1,234,567.",
        "They've been working on the new compiler since March 14th.",
        "Tokenization affects throughput, memory usage, and context length.",
        "Visit us at https://example.org/path?q=1&lang=en for details.",
        "HELLO WORLD!!! This is LOUD text...",
        "   leading spaces and trailing spaces   ",
        "Line one\nLine two\n\nLine four after a blank line.",
    ],
    "ru": [
        "Съешь же ещё этих мягких французских булок, да выпей чаю.",
        "Москва — столица России, крупнейший город страны.",
        "В 2024 году было опубликовано более 1 500 статей.",
        "Он сказал: «Я не знаю, что будет завтра».",
        "Машинное обучение требует больших объёмов качественных данных.",
        "Ёжик в тумане — известный мультфильм Юрия Норштейна.",
        "Привет,мир!Как дела?",
        "ПРОВЕРКА ЗАГЛАВНЫХ БУКВ И цифр 12345.",
    ],
    "ar": [
        "اللغة العربية من أقدم اللغات السامية.",
        "ذهب الطالب إلى المدرسة في الصباح الباكر.",
        "يبلغ عدد سكان القاهرة أكثر من ٢٠ مليون نسمة.",
        "هل تتحدث الإنجليزية؟ نعم، قليلاً.",
    ],
    "bg": [
        "България е държава в Югоизточна Европа.",
        "Софийският университет е основан през 1888 година.",
        "Това е пример за изречение на български език.",
        "Ще се видим утре в десет часа сутринта.",
    ],
    "de": [
        "Die Donaudampfschifffahrtsgesellschaft ist ein langes Wort.",
        "Straßenbahnhaltestelle: Bitte nicht über die Gleise gehen!",
        "Ich hätte gern zwei Brötchen und einen Kaffee, bitte.",
        "Über 80 % der Befragten stimmten zu.",
        "Größere Modelle benötigen mehr Rechenleistung.",
    ],
    "es": [
        "¿Dónde está la biblioteca? ¡Necesito estudiar mañana!",
        "El niño comió una manzana en el jardín.",
        "La economía española creció un 2,5 % el año pasado.",
        "Señoras y señores, bienvenidos al espectáculo.",
    ],
    "fr": [
        "L'été dernier, nous sommes allés à la plage près de Nice.",
        "Qu'est-ce que c'est ? C'est un château médiéval.",
        "Les élèves ont réussi l'examen avec 95 % de réussite.",
        "Ça va très bien, merci beaucoup !",
    ],
    "it": [
        "La città di Firenze è famosa per l'arte rinascimentale.",
        "Perché non vieni con noi al cinema stasera?",
        "Il treno parte alle 18:45 dal binario 3.",
        "Più lentamente, per favore: non capisco l'italiano.",
    ],
    "pl": [
        "Zażółć gęślą jaźń — to zdanie zawiera polskie znaki.",
        "Warszawa jest stolicą Polski od końca XVI wieku.",
        "W Szczebrzeszynie chrząszcz brzmi w trzcinie.",
        "Proszę o rachunek, dziękuję bardzo.",
    ],
    "pt": [
        "A língua portuguesa é falada em vários continentes.",
        "Você já visitou São Paulo ou Lisboa?",
        "O orçamento aumentou 12,3% em relação ao ano anterior.",
        "Não há nada melhor do que um pão de queijo quentinho.",
    ],
    "th": [
        "ภาษาไทยเป็นภาษาราชการของประเทศไทย",
        "กรุงเทพมหานครเป็นเมืองหลวงของประเทศไทย",
        "วันนี้อากาศดีมาก เราไปเที่ยวทะเลกันเถอะ",
        "ฉันชอบกินข้าวผัดกับต้มยำกุ้ง",
    ],
    "zh": [
        "机器学习是人工智能的一个分支。",
        "北京是中华人民共和国的首都，有三千多年的历史。",
        "今天天气很好，我们去公园散步吧！",
        "这个模型在2024年发布，参数量为15亿。",
        "我們使用繁體中文書寫這個句子。",
    ],
    "misc": [
        "fn main() { println!(\"Hello, {}!\", name); }",
        "def f(x):\n    return x ** 2  # square\n",
        "emoji test 😀🎉👍🏽 and flags 🇷🇺🇺🇸",
        "tabs\tand\tmixed \t whitespace\r\nwindows line",
        "e-mail: someone@example.com, phone +7 (495) 123-45-67",
        "日本語のテキストも少し含めます。",
        "Ελληνικά: Καλημέρα κόσμε!",
        "한국어 문장도 포함됩니다.",
        "אני אוהב ללמוד שפות חדשות.",
        "1234567890 000 00 0 12.5e-3 0x1F",
        "'s 'S 'll 'LL 'Re 've 'm 'd",
        "   ",
        "\n\n\n",
        "a",
        "Ünïcödé çombining: é ä ô",
        "zero​width‍joiner﻿bom",
    ],
}


def variants(rng, pool):
    out = []
    flat = [s for lang in sorted(pool) for s in pool[lang]]
    out.extend(flat)
    while len(out) < 500:
        kind = rng.randrange(7)
        a, b = rng.choice(flat), rng.choice(flat)
        if kind == 0:
            s = a + " " + b
        elif kind == 1:
            s = a.upper()
        elif kind == 2:
            s = a.lower() + "\n" + b
        elif kind == 3:
            s = f"{rng.randrange(10**7)} {a} ({rng.randrange(1000)})"
        elif kind == 4:
            s = "  " + a + "  \n"
        elif kind == 5:
            words = a.split(" ")
            rng.shuffle(words)
            s = " ".join(words)
        else:
            s = a + b
        out.append(s)
    return out[:500]


def main(model_path, out_path):
    ranks = {}
    with open(model_path, "rb") as f:
        for line in f:
            if line.strip():
                tok, rank = line.split()
                ranks[base64.b64decode(tok)] = int(rank)
    enc = tiktoken.Encoding(name="llama3", pat_str=PATTERN, mergeable_ranks=ranks, special_tokens={})
    rng = random.Random(20240611)
    with open(out_path, "w", encoding="utf-8") as f:
        for text in variants(rng, BASE):
            ids = enc.encode_ordinary(text)
            assert enc.decode(ids) == text
            f.write(json.dumps({"text": text, "ids": ids}, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
