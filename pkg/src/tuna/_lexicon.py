"""Bundled word lists for the rule-based tagger.

Small, hand-curated, and biased toward image captions (objects, colors,
materials, scene words). Unknown alphabetic words fall back to suffix rules and
then to NOUN, which is the right default for caption vocabulary.
"""

STOPWORDS = frozenset("""
a an the this that these those some any each every all both either neither no
of in on at by for with without within into onto from to toward towards over under
above below beneath beside besides between among around about across along through
throughout during before after behind near off out up down upon via per against
inside outside underneath amid amongst like than as
and or but nor so yet if then else while because although though whereas whether
i me my mine we us our ours you your yours he him his she her hers it its they them
their theirs one ones someone something anyone anything everyone everything nobody
nothing who whom whose which what where when why how here there
is are was were be been being am do does did doing done have has had having
can could will would shall should may might must
not very too also just only really quite rather almost still even again ever never
always often sometimes together alone away back
two three four five six seven eight nine ten eleven twelve hundred thousand
first second third many much more most few several other another such own same
""".split())

VERBS = frozenset("""
sit sits sat sitting stand stands stood standing lie lies lay lying walk walks walked
walking run runs ran running ride rides rode riding hold holds held holding look looks
looked looking eat eats ate eating drink drinks drank drinking play plays played
playing wear wears wore wearing fly flies flew flying swim swims swam swimming
jump jumps jumped jumping climb climbs climbed climbing carry carries carried carrying
watch watches watched watching wait waits waited waiting smile smiles smiled smiling
pose poses posed posing show shows showed shown showing take takes took taken taking
make makes made making use uses used using get gets got getting go goes went gone
going come comes came coming see sees saw seen seeing grow grows grew grown growing
hang hangs hung hanging parked rest rests rested resting cook cooks cooked
cooking read reads reading write writes wrote written writing open opens opened
close closes closed cut cuts cutting fill fills filled filling cover covers covered
covering surround surrounds surrounded surrounding line lines lined lining
float floats floated floating lean leans leaned leaning face faces faced facing
throw throws threw thrown throwing catch catches caught catching kick kicks kicked
kicking pull pulls pulled pulling push pushes pushed pushing lead leads led leading
feature features featured featuring contain contains contained containing
overlook overlooks overlooking glow glows glowing shine shines shone shining
rise rises rose rising set sets setting fall falls fell fallen falling
display displays displayed displaying sell sells sold selling
""".split())

ADJECTIVES = frozenset("""
red green blue yellow orange purple pink brown black white gray grey silver golden
gold beige teal turquoise navy maroon crimson violet cyan magenta ivory
big small large little tiny huge giant tall short long wide narrow thick thin
old young new ancient modern vintage antique fresh ripe raw
wooden metallic plastic glass leather woolen woollen cotton silk denim
stone brick concrete marble ceramic rusty shiny dark bright light pale colorful
colourful striped spotted checkered plaid floral polka dotted
hot cold warm cool wet dry snowy sunny cloudy rainy foggy windy stormy
empty full clean dirty busy quiet crowded open round square flat steep
beautiful pretty cute ugly happy sad angry funny fluffy furry hairy bald
heavy soft hard smooth rough sharp curly wavy
urban rural tropical coastal scenic rustic elegant casual formal traditional
wild domestic natural digital electric
""".split())

NOUNS = frozenset("""
apple banana orange pear grape lemon mango mangosteen durian cherry olive tomato
potato carrot onion bread cake pizza sandwich cheese coffee tea wine beer water
table chair sofa couch bed desk shelf lamp clock window door wall floor ceiling roof
kitchen bathroom bedroom room house building tower bridge street road car bus truck
train plane boat bicycle bike motorcycle cat dog horse cow sheep bird fish bear
elephant giraffe zebra man woman boy girl child children people person baby
player crowd team family couple friend tree flower grass plant leaf leaves forest
mountain hill river lake sea ocean beach sand sky cloud sun moon star snow rain
field park garden city town village country island desert valley
shirt dress jacket blazer coat hat cap shoe shoes boot bag scarf tie glasses
umbrella ball bat racket kite phone camera laptop computer screen book paper
painting picture photo image sign light clothing building ceiling morning evening
night sunset sunrise dusk dawn wedding party festival market restaurant cafe shop
store museum church temple castle palace stadium airport station hospital school
animal metal pattern background view landscape portrait
""".split())

NOUN_SUFFIXES = (
    "ness", "tion", "sion", "ment", "ity", "ism", "ist", "ship", "hood",
    "ance", "ence", "ery", "dom",
)

ADJ_SUFFIXES = ("ous", "ful", "less", "ive", "able", "ible", "ic", "ical", "ish")

# words with these endings are neither nouns nor adjectives unless listed above
OTHER_SUFFIXES = ("ly", "ing", "ed")
