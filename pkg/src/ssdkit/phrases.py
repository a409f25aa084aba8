"""The 96-phrase elicitation list.

Entries are keyed by position (p001..p096) because several phrases
recur in the protocol; the id, not the text, identifies a slot.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Phrase:
    phrase_id: str
    text: str
    romanization: str
    translation: str


_RAW = (
    ("布丁", "Bùdīng", "pudding"),
    ("麵包", "miànbāo", "bread"),
    ("大白菜", "dàbáicài", "Chinese cabbage"),
    ("螃蟹", "pángxiè", "Crab"),
    ("奶瓶", "nǎipíng", "baby bottle"),
    ("蓮蓬頭", "liánpengtóu", "shower head"),
    ("帽子", "màozi", "hat"),
    ("玉米", "yùmǐ", "corn"),
    ("捉迷藏", "zhuōmícáng", "hide and seek"),
    ("鳳梨", "fènglí", "pineapple"),
    ("衣服", "yīfú", "clothing"),
    ("吹風機", "chuīfēngjī", "hair dryer"),
    ("動物", "dòngwù", "animal"),
    ("蝴蝶", "húdié", "Butterfly"),
    ("看電視", "kàndiànshì", "watch TV"),
    ("太陽", "tàiyáng", "Sun"),
    ("枕頭", "zhěntou", "Pillow"),
    ("一條魚", "yītiáoyú", "a fish"),
    ("鈕扣", "niǔkòu", "button"),
    ("電腦", "diànnǎo", "computer"),
    ("喝奶昔", "hēnǎixī", "drink milkshake"),
    ("老虎", "lǎohǔ", "Tiger"),
    ("恐龍", "kǒnglóng", "Dinosaur"),
    ("養樂多", "yǎnglèduō", "Yakult"),
    ("果凍", "guǒdòng", "jelly"),
    ("烏龜", "wūguī", "tortoise"),
    ("去公園", "qùgōngyuán", "go to the park"),
    ("筷子", "kuàizi", "Chopsticks"),
    ("貝殼", "bèiké", "shell"),
    ("巧克力", "qiǎokèlì", "chocolate"),
    ("漢堡", "hànbǎo", "hamburger"),
    ("大海", "dàhǎi", "the sea"),
    ("救護車", "jiùhùchē", "ambulance"),
    ("膠帶", "jiāodài", "adhesive tape"),
    ("果醬", "guǒjiàng", "jam"),
    ("指甲刀", "zhǐjiǎdāo", "nail clippers"),
    ("鉛筆", "qiānbǐ", "pencil"),
    ("鋼琴", "gāngqín", "piano"),
    ("中秋節", "zhōngqiūjié", "Mid-Autumn Festival"),
    ("信封", "xìnfēng", "envelope"),
    ("點心", "diǎnxīn", "dessert"),
    ("口香糖", "kǒuxiāngtáng", "chewing gum"),
    ("站牌", "zhànpái", "stop sign"),
    ("蠟燭", "làzhú", "Candle"),
    ("擦桌子", "cāzhuōzi", "wipe the table"),
    ("抽屜", "chōutì", "drawer"),
    ("警察", "jǐngchá", "Policemen"),
    ("柳橙汁", "liǔchéngzhī", "orange juice"),
    ("閃電", "shǎndiàn", "lightning"),
    ("牙刷", "yáshuā", "toothbrush"),
    ("直升機", "zhíshēngjī", "helicopter"),
    ("日歷", "rìlì", "calendar"),
    ("超人", "chāorén", "superman"),
    ("大榕樹", "dàróngshù", "Large banyan"),
    ("走路", "zǒulù", "walk"),
    ("洗澡", "xǐzǎo", "bath"),
    ("水族箱", "shuǐzúxiāng", "aquarium"),
    ("草莓", "cǎoméi", "Strawberry"),
    ("洋蔥", "yángcōng", "onion"),
    ("上廁所", "shàngcèsuǒ", "To the restroom"),
    ("掃把", "sàobǎ", "broom"),
    ("垃圾", "lèsè", "Rubbish"),
    ("去散步", "qùsànbù", "go for a walk"),
    ("衣服", "yīfú", "clothing"),
    ("果醬", "guǒjiàng", "jam"),
    ("指甲刀", "zhǐjiǎdāo", "nail clippers"),
    ("筷子", "kuàizi", "Chopsticks"),
    ("烏龜", "wūguī", "tortoise"),
    ("去公園", "qùgōngyuán", "go to the park"),
    ("杜鵑花", "dùjuānhuā", "Rhododendron"),
    ("選擇", "xuǎnzé", "choose"),
    ("缺點", "quēdiǎn", "shortcoming"),
    ("太陽", "tàiyáng", "Sun"),
    ("大海", "dàhǎi", "the sea"),
    ("喝奶昔", "hēnǎixī", "drink milkshake"),
    ("草莓", "cǎoméi", "Strawberry"),
    ("貝殼", "bèiké", "shell"),
    ("水族箱", "shuǐzúxiāng", "aquarium"),
    ("帽子", "màozi", "hat"),
    ("麵包", "miànbāo", "bread"),
    ("一條魚", "yītiáoyú", "a fish"),
    ("鈕扣", "niǔkòu", "button"),
    ("枕頭", "zhěntou", "Pillow"),
    ("中秋節", "zhōngqiūjié", "Mid-Autumn Festival"),
    ("漢堡", "hànbǎo", "hamburger"),
    ("電腦", "diànnǎo", "computer"),
    ("看電視", "kàndiànshì", "watch TV"),
    ("信封", "xìnfēng", "envelope"),
    ("鋼琴", "gāngqín", "piano"),
    ("吃點心", "chīdiǎnxīn", "eat dessert"),
    ("螃蟹", "pángxiè", "Crab"),
    ("果醬", "guǒjiàng", "jam"),
    ("口香糖", "kǒuxiāngtáng", "chewing gum"),
    ("鳳梨", "fènglí", "pineapple"),
    ("奶瓶", "nǎipíng", "baby bottle"),
    ("蓮蓬頭", "liánpengtóu", "shower head"),
)

PHRASES = tuple(
    Phrase(f"p{i + 1:03d}", text, roman, translation)
    for i, (text, roman, translation) in enumerate(_RAW)
)

PHRASE_IDS = frozenset(p.phrase_id for p in PHRASES)

_BY_ID = {p.phrase_id: p for p in PHRASES}


def phrase_by_id(phrase_id: str) -> Phrase:
    return _BY_ID[phrase_id]
